import numpy as np
import pytest

from helpers import mlp_forward_by_hand
from stablerank.errors import ParseError
from stablerank.models import (LinearModel, TabularDataset, empty_mask,
                               eval_model, full_mask, load_dataset, load_model,
                               mask_from_indices, split_dataset,
                               value_function_exhaustive,
                               value_function_marginal)


def test_dataset_invariants():
    ds = TabularDataset([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    assert ds.n_rows == 3 and ds.n_features == 2
    np.testing.assert_allclose(ds.column_means, [3.0, 4.0])
    with pytest.raises(ValueError):
        ds.values[0, 0] = 9.0  # immutable after load


def test_dataset_rejects_bad_shapes():
    with pytest.raises(ValueError):
        TabularDataset(np.ones((3, 1)))
    with pytest.raises(ValueError):
        TabularDataset([[1.0, np.inf]])


def test_eval_model_linear_dot_product():
    handle = LinearModel(np.array([1.0, 2.0]), bias=0.0).as_handle()
    np.testing.assert_allclose(eval_model(handle, [[1.0, 1.0]]), [3.0])


def test_eval_model_empty_batch():
    handle = LinearModel(np.array([1.0, 2.0])).as_handle()
    out = eval_model(handle, np.empty((0, 2)))
    assert out.shape == (0,)


def test_mlp_matches_hand_forward(mlp2):
    # independent oracle: explicit loops over the same weights
    layers = [([[1.0, -2.0], [0.5, 1.5]], [0.25, -0.5]), ([[2.0], [-1.0]], [0.1])]
    for x in ([0.3, -0.7], [1.2, 0.4], [-2.0, 3.0]):
        expected = mlp_forward_by_hand(layers, x)
        got = mlp2.as_handle().evaluate(np.array([x]))[0]
        assert got == pytest.approx(expected, abs=1e-12)


def test_value_function_full_mask_is_model_output(handle6, background6, rng):
    x = background6.values[0]
    v = value_function_marginal(handle6, x, full_mask(6), background6, m=5, rng=rng)
    assert v == pytest.approx(float(handle6.evaluate(x[None])[0]))


def test_value_function_empty_mask_exhaustive_is_background_mean(handle6, background6):
    x = np.zeros(6)
    v = value_function_exhaustive(handle6, x, empty_mask(6), background6)
    assert v == pytest.approx(float(handle6.evaluate(background6.values).mean()))


def test_value_function_linear_closed_form(handle6, linear6, background6):
    # E[v(S)] = sum_{j in S} w_j x_j + sum_{j notin S} w_j mu_j + b, for any S
    rng = np.random.default_rng(3)
    x = rng.normal(size=6)
    mu = background6.column_means
    w = linear6.weights
    for seed, members in enumerate(([0, 2, 5], [1], [0, 1, 2, 3, 4], [3, 4])):
        mask = mask_from_indices(6, members)
        expected = w[mask] @ x[mask] + w[~mask] @ mu[~mask] + linear6.bias
        draws = value_function_marginal(handle6, x, mask, background6, m=10_000,
                                        rng=np.random.default_rng(4 + seed))
        # per-fill variance of the linear combination of missing features
        missing = background6.values[:, ~mask] @ w[~mask]
        se = missing.std(ddof=1) / np.sqrt(10_000)
        assert abs(draws - expected) < 3 * se, members


def test_value_function_seed_reproducible(handle6, background6):
    x = background6.values[1]
    mask = mask_from_indices(6, [1, 3])
    a = value_function_marginal(handle6, x, mask, background6, m=50,
                                rng=np.random.default_rng(99))
    b = value_function_marginal(handle6, x, mask, background6, m=50,
                                rng=np.random.default_rng(99))
    assert a == b


def test_load_dataset_and_means(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,b,c\n1,2,3\n4,5,6\n7,8,9\n")
    ds = load_dataset(path)
    assert ds.n_rows == 3 and ds.n_features == 3
    np.testing.assert_allclose(ds.column_means, [4.0, 5.0, 6.0])


def test_load_dataset_drops_label_column(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,b,label\n1,2,0\n4,5,1\n")
    ds = load_dataset(path)
    assert ds.feature_names == ("a", "b")
    ds_all = load_dataset(path, drop_label=False)
    assert ds_all.n_features == 3


def test_load_dataset_malformed_row_names_line(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,b\n1,2\n3,oops\n")
    with pytest.raises(ParseError) as err:
        load_dataset(path)
    assert err.value.line == 3


def test_split_dataset_is_seeded(tmp_path):
    values = np.arange(40.0).reshape(20, 2)
    ds = TabularDataset(values)
    train1, test1 = split_dataset(ds, 0.25, seed=5)
    train2, test2 = split_dataset(ds, 0.25, seed=5)
    np.testing.assert_array_equal(train1.values, train2.values)
    np.testing.assert_array_equal(test1.values, test2.values)
    assert test1.n_rows == 5 and train1.n_rows == 15


def test_load_linear_model_file(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("linear\n1.0 2.0 -0.5\n")
    handle = load_model(path)
    np.testing.assert_allclose(eval_model(handle, [[1.0, 1.0]]), [2.5])


def test_load_mlp_model_file(tmp_path, mlp2):
    path = tmp_path / "m.txt"
    path.write_text(
        "mlp\n2 2 1\n"
        "1.0 -2.0\n0.5 1.5\n0.25 -0.5\n"
        "2.0\n-1.0\n0.1\n")
    handle = load_model(path)
    x = np.array([[0.3, -0.7]])
    np.testing.assert_allclose(handle.evaluate(x), mlp2.as_handle().evaluate(x))


def test_load_model_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("linear\n1.0 oops 2.0\n")
    with pytest.raises(ParseError):
        load_model(bad)
    bad.write_text("quadratic\n1 2 3\n")
    with pytest.raises(ParseError):
        load_model(bad)
    bad.write_text("mlp\n2 2 1\n1 2 3\n")
    with pytest.raises(ParseError):
        load_model(bad)
