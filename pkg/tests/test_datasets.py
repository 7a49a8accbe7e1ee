import math

import hypothesis
import hypothesis.strategies as st
import numpy as np
import pytest

from moegp.datasets import (BERNHOLDT_LEVELS, BERNHOLDT_NOISE_SD, BERNHOLDT_PLATEAU_CENTERS,
                            Dataset, SplitSpec, bernholdt_f, bernholdt_g, distinguishable_levels,
                            gen_bernholdt, gen_higdon, higdon_f, load_csv, plateau_products,
                            save_csv, train_test_split)
from moegp.errors import InvalidArgumentError, ParseError


def test_higdon_function_values():
    assert higdon_f(10.0) == 0.0
    assert higdon_f(2.5) == pytest.approx(1.2, abs=1e-15)
    assert higdon_f(15.0) == pytest.approx(0.5, abs=1e-15)
    x = 7.3
    assert higdon_f(x) == pytest.approx(math.sin(math.pi * x / 5) + 0.2 * math.cos(4 * math.pi * x / 5))


def test_higdon_noise_model():
    ds = gen_higdon(100_000, seed=11)
    r = ds.y - higdon_f(ds.X[:, 0])
    assert abs(r.mean()) <= 0.01
    assert 0.09 <= r.std() <= 0.11
    assert ds.d == 1 and ds.X.min() >= 0 and ds.X.max() <= 20


def test_generators_pure():
    for gen in (gen_higdon, gen_bernholdt):
        a, b = gen(50, seed=3), gen(50, seed=3)
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.y, b.y)
        assert not np.array_equal(a.y, gen(50, seed=4).y)
    with pytest.raises(InvalidArgumentError):
        gen_higdon(0)


def test_bernholdt_plateaus():
    g = bernholdt_g(np.array(BERNHOLDT_PLATEAU_CENTERS))
    np.testing.assert_allclose(g, BERNHOLDT_LEVELS, atol=1e-9)


@hypothesis.given(*[st.floats(-4, 10)] * 4)
def test_bernholdt_separability(a, b, c, d):
    f = lambda u, v: float(bernholdt_f(np.array([[u, v]]))[0])
    assert f(a, b) * f(c, d) == pytest.approx(f(a, d) * f(c, b), rel=1e-10, abs=1e-12)


def test_bernholdt_regimes():
    assert plateau_products() == [-8.0, -4.0, 0.0, 4.0, 8.0, 16.0]
    assert distinguishable_levels(plateau_products(), BERNHOLDT_NOISE_SD, k=5) >= 4
    ds = gen_bernholdt(1000, seed=0)
    assert ds.feature_names == ("x_1", "x_2")
    assert ds.X.min() >= -4 and ds.X.max() <= 10


def test_csv_shape_and_round_trip(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x_1,x_2,y\n1,2,3\n4,5,6\n7.5,-8e-3,9\n")
    ds = load_csv(p)
    assert (ds.n, ds.d) == (3, 2)
    src = gen_bernholdt(40, seed=1)
    save_csv(src, tmp_path / "b.csv")
    back = load_csv(tmp_path / "b.csv")
    np.testing.assert_array_equal(back.X, src.X)
    np.testing.assert_array_equal(back.y, src.y)
    assert back.feature_names == src.feature_names


@pytest.mark.parametrize("body, line", [
    ("x_1,y\n1,2\n3,NaN\n", 3),
    ("x_1,y\n1,2\n3,4\nfoo,1\n", 4),
    ("x_1,y\n1,2,3\n", 2),
    ("x_1,y\n1,inf\n", 2),
])
def test_csv_errors_name_line(tmp_path, body, line):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(ParseError) as exc:
        load_csv(p)
    assert exc.value.line == line
    assert f"line {line}" in str(exc.value)


def test_csv_missing_file(tmp_path):
    with pytest.raises(ParseError):
        load_csv(tmp_path / "absent.csv")


def test_split_examples():
    ds = gen_higdon(10, seed=0)
    tr, te = train_test_split(ds, SplitSpec(0.8, seed=2))
    assert (tr.n, te.n) == (8, 2)
    both = np.concatenate([tr.X[:, 0], te.X[:, 0]])
    assert sorted(both) == sorted(ds.X[:, 0])
    tr2, _ = train_test_split(ds, SplitSpec(0.8, seed=2))
    np.testing.assert_array_equal(tr.X, tr2.X)
    with pytest.raises(InvalidArgumentError):
        SplitSpec(1.0)


@hypothesis.given(st.integers(2, 500), st.floats(0.05, 0.95), st.integers(0, 1000))
def test_split_sizes(n, frac, seed):
    ds = Dataset(np.arange(n, dtype=float), np.zeros(n))
    tr, te = train_test_split(ds, SplitSpec(frac, seed))
    assert tr.n == min(max(math.floor(frac * n + 0.5), 1), n - 1)
    assert tr.n + te.n == n
    assert not set(tr.X[:, 0]) & set(te.X[:, 0])
