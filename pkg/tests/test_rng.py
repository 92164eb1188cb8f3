import numpy as np

from acorl.rng import component_rng, derive_seed, make_rng, normal, permutation, uniform


def test_streams_are_reproducible():
    assert make_rng(7).random(5).tobytes() == make_rng(7).random(5).tobytes()
    assert normal(make_rng(7), 9).tobytes() == normal(make_rng(7), 9).tobytes()


def test_pinned_reference_values():
    # any change here breaks cross-implementation reproducibility of every artifact
    assert make_rng(0).random(3).tolist() == [0.011546754286331562, 0.24154919656271812, 0.11142585551493822]
    assert derive_seed(0, "data") == 11614811347330167572
    assert normal(make_rng(1), 3).tolist() == [0.4943877442845478, -0.6922074110439179, 0.5715938418833231]
    assert permutation(make_rng(0), 6).tolist() == [3, 2, 4, 5, 1, 0]


def test_box_muller_pairs():
    rng = make_rng(3)
    u = rng.random(2)
    r = np.sqrt(-2 * np.log1p(-u[0]))
    z = normal(make_rng(3), 2)
    np.testing.assert_allclose(z, [r * np.cos(2 * np.pi * u[1]), r * np.sin(2 * np.pi * u[1])], rtol=0, atol=0)


def test_normal_moments():
    z = normal(make_rng(1), 200_000)
    assert abs(z.mean()) < 0.01 and abs(z.std() - 1) < 0.01


def test_permutation_is_a_permutation():
    p = permutation(make_rng(2), 50)
    assert sorted(p.tolist()) == list(range(50))
    assert p.tolist() != list(range(50))
    assert permutation(make_rng(2), 1).tolist() == [0]
    assert permutation(make_rng(2), 0).tolist() == []


def test_derived_seeds_differ_by_component():
    assert derive_seed(0, "a") != derive_seed(0, "b")
    assert derive_seed(0, "a") != derive_seed(1, "a")
    assert derive_seed(5, "x") == derive_seed(5, "x")
    assert component_rng(5, "x").random() == make_rng(derive_seed(5, "x")).random()


def test_uniform_bounds():
    u = uniform(make_rng(0), 1000, -2.0, 3.0)
    assert u.min() >= -2.0 and u.max() < 3.0
