import numpy as np
import pytest

from rankope.core import BehaviorMatrix, DatasetError, EmbeddingModel, EstimatorSpec, Family
from rankope.synthenv import make_behavior_matrix

from conftest import make_dataset


def test_dataset_shapes(tiny_dataset):
    ds = tiny_dataset
    assert (ds.n, ds.n_positions, ds.n_dims) == (3, 2, 1)
    assert len(ds) == 3
    s = ds.sample(1)
    np.testing.assert_array_equal(s.action, ds.actions[1])
    assert s.behavior_id is None


def test_empty_dataset_is_valid():
    ds = make_dataset(n=0, n_contexts=1)
    assert ds.n == 0


@pytest.mark.parametrize(
    "field, index, value, message",
    [
        ("actions", (2, 1), 3, "sample 2: action out of bounds"),
        ("embeddings", (0, 0, 0), 2, "sample 0: embedding category out of bounds"),
        ("embeddings", (1, 1, 0), -1, "sample 1: embedding category out of bounds"),
        ("rewards", (1, 0), np.nan, "sample 1: non-finite reward"),
        ("context_index", (2,), 7, "sample 2: context index out of range"),
    ],
)
def test_validation_names_the_first_bad_sample(field, index, value, message):
    ds = make_dataset()
    arr = getattr(ds, field).copy().astype(float if field == "rewards" else np.int64)
    arr[index] = value
    setattr(ds, field, arr)
    with pytest.raises(DatasetError, match=message):
        ds.validate()


def test_bernoulli_rewards_must_be_binary():
    ds = make_dataset(reward_kind="bernoulli")
    ds.rewards = ds.rewards.copy()
    ds.rewards[1, 1] = 0.5
    with pytest.raises(DatasetError, match="sample 1"):
        ds.validate()


def test_shape_mismatch():
    ds = make_dataset()
    ds.rewards = ds.rewards[:, :1]
    with pytest.raises(DatasetError, match="rewards has shape"):
        ds.validate()


def test_embedding_model_checks():
    with pytest.raises(DatasetError):
        EmbeddingModel(np.full((1, 2, 1, 2), 0.6))
    with pytest.raises(DatasetError):
        EmbeddingModel(np.ones((1, 2, 1, 2)) * [1.0, 0.0], category_counts=[3])
    probs = np.zeros((1, 2, 2, 3))
    probs[..., 0, :2] = 0.5
    probs[..., 1, :] = 1 / 3
    model = EmbeddingModel(probs, category_counts=[2, 3])
    assert model.n_dims == 2
    assert not model.probs.flags.writeable


def test_embedding_from_logits_single_category():
    model = EmbeddingModel.from_logits(np.random.default_rng(0).normal(size=(2, 3, 4, 1)))
    np.testing.assert_array_equal(model.probs, 1.0)


def test_behavior_matrix_validation():
    with pytest.raises(ValueError):
        BehaviorMatrix(np.array([[1, 2], [0, 1]]))
    with pytest.raises(ValueError):
        BehaviorMatrix(np.ones((2, 3)))
    a = make_behavior_matrix("cascade", 3)
    assert a == make_behavior_matrix("cascade", 3)
    assert hash(a) == hash(make_behavior_matrix("cascade", 3))


@pytest.mark.parametrize(
    "text, family, sn, dims, slope",
    [
        ("SIPS", Family.SIPS, False, None, False),
        ("snRIPS", Family.RIPS, True, None, False),
        ("MIIPS@2", Family.MIIPS, False, 2, False),
        ("MRIPS (w/SLOPE)", Family.MRIPS, False, None, True),
        ("MSIPS+slope", Family.MSIPS, False, None, True),
        ("snAIPS", Family.AIPS, True, None, False),
    ],
)
def test_spec_parse(text, family, sn, dims, slope):
    spec = EstimatorSpec.parse(text)
    assert (spec.family, spec.self_normalized, spec.retained_dims, spec.slope) == (family, sn, dims, slope)
    assert EstimatorSpec.parse(spec.name) == spec


@pytest.mark.parametrize("text", ["XIPS", "snMRIPS (w/SLOPE)", "SIPS@2x", "SIPS (w/SLOPE)", ""])
def test_spec_parse_rejects(text):
    with pytest.raises(ValueError):
        EstimatorSpec.parse(text)


def test_spec_names():
    assert EstimatorSpec(Family.AIPS, behavior=make_behavior_matrix("cascade", 3)).name == "AIPS[cascade]"
    assert EstimatorSpec.parse("AIPS").use_logged_behavior
    with pytest.raises(ValueError):
        EstimatorSpec(Family.AIPS)
    assert Family.MRIPS.scope == "prefix" and Family.MRIPS.marginal
    assert Family.AIPS.scope is None and not Family.SIPS.marginal
