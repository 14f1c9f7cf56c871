import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats
from scipy.special import gammainc

from pnorms.covering import (
    EXPERIMENT_ALPHA,
    CoveringConstants,
    ExtendedHadamard,
    HittingSet,
    build_H1,
    build_H2,
    build_H3,
    build_HB,
    build_HG,
    build_HH,
    cardinality_curve,
    combine_append,
    cut,
    grid_round,
    h2_parameters,
    h3_cardinality,
    hadamard_apply,
    hh_block_sizes,
    lift_hadamard,
    lift_kron,
    mu,
    probe_hitting_ratio,
    sample_even_lp,
)
from pnorms.tensor import lp_norm
from pnorms.utils.errors import ValidationError


def assert_unit(H):
    norms = np.array([lp_norm(v, H.p) for v in H.vectors])
    assert_allclose(norms, 1, atol=1e-12)


def basis_set(n, p, tau=1.0):
    return HittingSet(p, n, np.eye(n), tau, {"kind": "basis"})


# H_H


def test_hh_alpha_one_is_vacuous(caplog):
    H = build_HH(2, 3, alpha=1, beta=2)
    assert len(H) == 4
    assert H.tau == 0
    assert_allclose(np.abs(H.vectors), 2 ** (-1 / 3))
    assert "certifies nothing" in caplog.text


def test_hh_ratio_formula():
    H = build_HH(2, 3, alpha=2, beta=3)
    assert H.tau == pytest.approx((2 / 9) ** (1 / 3) / 2)
    assert H.tau == pytest.approx(0.3029, abs=1e-4)


def test_hh_experiment_parameters():
    H = build_HH(3, 3)
    alpha = EXPERIMENT_ALPHA
    assert H.construction == {"kind": "HH", "alpha": alpha, "beta": alpha + 1}
    assert H.tau == pytest.approx(mu(alpha, alpha + 1, 3))
    assert H.tau == pytest.approx(0.4147, abs=1e-3)
    assert_unit(H)


def test_hh_block_sizes_cover_n():
    for n in range(1, 12):
        sizes = hh_block_sizes(n, 2, 3)
        assert sum(sizes) == n
        assert all(s >= 0 for s in sizes)


def test_hh_parameter_domain():
    with pytest.raises(ValidationError):
        build_HH(3, 3, alpha=0.5)
    with pytest.raises(ValidationError):
        build_HH(3, 3, alpha=2, beta=2.5)
    with pytest.raises(ValidationError, match="cap"):
        build_HH(12, 3, cap=1000)


# H_B and H_G


def test_hb_one_dimension():
    H = build_HB(1, 3, 2)
    assert_array_equal(np.sort(H.vectors.ravel()), [-1, 1])
    assert H.tau == 0.5


def test_hb_plane_directions():
    # 0 < |z| <= 1.5√2 leaves the 8 primitive directions (±1,0), (0,±1), (±1,±1)
    H = build_HB(2, 2, 1.5)
    assert len(H) == 8
    assert_unit(H)


def test_hb_cap():
    with pytest.raises(ValidationError, match="cap"):
        build_HB(8, 3, 3, cap=1000)
    with pytest.raises(ValidationError):
        build_HB(2, 3, 1.0)


def test_hg():
    H = build_HG(1, 3, 2)
    assert_array_equal(np.sort(H.vectors.ravel()), [-1, 1])
    assert H.tau == 0

    H = build_HG(2, 3, 3)
    assert len(H) <= 7**2


def test_grid_rounding_property():
    rng = np.random.default_rng(7)
    n, p, m = 3, 3, 4
    H = build_HG(n, p, m)
    for _ in range(50):
        x = sample_even_lp(n, p, rng)
        w = grid_round(x, m)
        assert 1 - 1e-12 <= lp_norm(w, p) <= 1 + n ** (1 / p) / m + 1e-12
        target = w / lp_norm(w, p)
        assert np.min(np.max(np.abs(H.vectors - target), axis=1)) < 1e-12


# combinators


def test_lift_kron_basis():
    H = lift_kron(basis_set(1, 3), 2)
    assert_array_equal(H.vectors, np.eye(2))
    assert H.tau == pytest.approx(2 ** (-1 / 1.5))


def test_lift_kron_probe():
    base = build_HH(2, 3)
    H = lift_kron(base, 3)
    assert len(H) == 3 * len(base)
    assert H.n == 6
    assert_unit(H)
    assert probe_hitting_ratio(H, 2000, np.random.default_rng(0), "adversarial") >= H.tau - 1e-9


def test_combine_append():
    a, b = build_HH(2, 3), build_HH(2, 3)
    H = combine_append(a, b)
    assert len(H) == len(a) + len(b)
    assert H.tau == pytest.approx(a.tau * 2 ** (-1 / 1.5))
    assert_unit(H)
    assert probe_hitting_ratio(H, 2000, np.random.default_rng(1), "adversarial") >= H.tau - 1e-9

    with pytest.raises(ValidationError):
        combine_append(a, build_HH(2, 4))
    with pytest.raises(ValidationError):
        combine_append(a, build_HH(2, 3, alpha=1, beta=2))


@pytest.mark.parametrize("n, parts", [(8, (3, 2, 2)), (3, (2, 1, 1))])
def test_h1_parameters(n, parts):
    H = build_H1(n, 3)
    assert (H.extra["n1"], H.extra["n2"], H.extra["n3"]) == parts


def test_h1_ratio():
    n, p = 4, 3
    H = build_H1(n, p)
    alpha = EXPERIMENT_ALPHA
    expected = mu(alpha, alpha + 1, p) * (math.log(n) / (n + math.log(n))) ** (1 / 1.5)
    assert H.tau == pytest.approx(expected)
    assert_unit(H)


# Hadamard


def test_hadamard_small():
    assert_array_equal(hadamard_apply(ExtendedHadamard(1, 1), [1, 0]), [1, 1])


def test_hadamard_matches_dense():
    rng = np.random.default_rng(8)
    for m, k in [(1, 3), (2, 2), (3, 1), (4, 3), (1, 6)]:
        h = ExtendedHadamard(m, k)
        dense = h.matrix()
        assert_array_equal(dense, dense.T)
        assert_allclose(dense @ dense, 2**k * np.eye(h.size))
        x = rng.normal(size=h.size)
        assert_allclose(h.apply(x), dense @ x, atol=1e-12)
        assert np.linalg.norm(h.apply(x)) == pytest.approx(2 ** (k / 2) * np.linalg.norm(x), rel=1e-12)
        assert_allclose(h.apply(h.apply(x)), 2**k * x, atol=1e-12)


def test_hadamard_block_sparse_norm():
    rng = np.random.default_rng(9)
    m, k, p = 3, 2, 3
    h = ExtendedHadamard(m, k)
    y = rng.normal(size=m)
    for i in range(2**k):
        x = np.kron(np.eye(2**k)[i], y)
        assert lp_norm(h.apply(x), p) == pytest.approx(2 ** (k / p) * lp_norm(x, p), rel=1e-12)


def test_hadamard_batched():
    rng = np.random.default_rng(10)
    h = ExtendedHadamard(2, 2)
    X = rng.normal(size=(5, 8))
    assert_allclose(h.apply(X), X @ h.matrix().T, atol=1e-12)


def test_lift_hadamard():
    base = build_HH(2, 4)
    same = lift_hadamard(base, 0)
    assert same.tau == pytest.approx(2 ** (0.5 - 0.75) * base.tau)

    H = lift_hadamard(base, 2)
    assert H.n == 8
    assert_unit(H)
    assert probe_hitting_ratio(H, 2000, np.random.default_rng(2), "adversarial") >= H.tau - 1e-9

    with pytest.raises(ValidationError):
        lift_hadamard(build_HH(2, 1.5), 1)


def test_cut():
    H = build_HH(3, 3)
    assert cut(H, 3) is H

    single = HittingSet(3, 3, [[0.0, 0.0, 1.0]], 0.5, {"kind": "test"})
    with pytest.raises(ValidationError, match="vanishes"):
        cut(single, 2)

    lifted = lift_hadamard(build_HH(3, 3), 1)
    short = cut(lifted, 5)
    assert short.tau == lifted.tau
    assert_unit(short)
    assert probe_hitting_ratio(short, 2000, np.random.default_rng(3), "adversarial") >= short.tau - 1e-9


@pytest.mark.parametrize("n, k, m", [(8, 1, 4), (3, 1, 2)])
def test_h2_parameters(n, k, m):
    assert h2_parameters(n) == (k, m)


def test_h2_ratio_formula():
    H = build_H2(3, 3)
    alpha = EXPERIMENT_ALPHA
    expected = mu(alpha, alpha + 1, 3) * math.log(3) ** (1 / 3) / math.sqrt(6)
    assert H.tau == pytest.approx(expected)
    assert H.n == 3
    assert_unit(H)

    with pytest.raises(ValidationError):
        build_H2(3, 1.5)


# certified ratios against probes


@pytest.mark.parametrize("n", [3, 4, 5])
@pytest.mark.parametrize("p", [3, 4])
@pytest.mark.parametrize("builder", [build_HH, build_H1, build_H2])
def test_certified_ratio_survives_probing(builder, n, p):
    H = builder(n, p)
    probed = probe_hitting_ratio(H, 10_000, np.random.default_rng(n * 10 + p), "adversarial")
    assert probed >= H.tau - 1e-9
    assert probed <= 1 + 1e-12


def test_hb_survives_probing():
    H = build_HB(2, 3, 2)
    assert probe_hitting_ratio(H, 10_000, np.random.default_rng(11)) >= 0.5 - 1e-9


def test_probe_of_signed_basis():
    n = 4
    H = HittingSet(1, n, np.vstack([np.eye(n), -np.eye(n)]), 1.0, {"kind": "basis"})
    # every probe lies on the max-norm sphere
    assert probe_hitting_ratio(H, 1000, np.random.default_rng(12)) == pytest.approx(1.0)


def test_probe_errors():
    H = build_HH(2, 3)
    with pytest.raises(ValidationError):
        probe_hitting_ratio(H, 10, np.random.default_rng(0), "sideways")
    with pytest.raises(ValidationError):
        probe_hitting_ratio(H, 0, np.random.default_rng(0), "random")


# randomized construction


def test_sampler_unit_norm():
    rng = np.random.default_rng(13)
    X = sample_even_lp(5, 3, rng, size=200)
    assert_allclose([lp_norm(x, 3) for x in X], 1, atol=1e-12)


def test_sampler_gamma_mean():
    p = 3
    draws = np.abs(sample_even_lp(1, p, np.random.default_rng(14), size=100_000, raw=True).ravel()) ** p
    # Gamma(1/p, 1) has mean and variance 1/p
    sigma = math.sqrt((1 / p) / draws.size)
    assert abs(draws.mean() - 1 / p) <= 3 * sigma


def test_sampler_ks():
    p = 3
    draws = np.abs(sample_even_lp(1, p, np.random.default_rng(15), size=10_000, raw=True).ravel())
    result = stats.kstest(draws, lambda t: gammainc(1 / p, t**p))
    assert result.pvalue > 0.01


def test_h3_cardinality_and_ratio():
    constants = CoveringConstants()
    count = h3_cardinality(3, 3, 0.05, constants)
    expected = math.ceil(20 * 3**0.1 * ((0.5 + 1 / 1.5) * 3 * math.log(3) + math.log(20)))
    assert count == expected

    H = build_H3(3, 3, 0.05, seed=4)
    assert len(H) == count
    assert H.probabilistic
    assert H.confidence == pytest.approx(0.95)
    assert H.tau == pytest.approx(math.sqrt(math.log(3) / 6))
    assert_unit(H)


def test_h3_seeded_regeneration():
    a = build_H3(3, 3, 0.05, seed=21)
    b = build_H3(3, 3, 0.05, seed=21)
    assert_array_equal(a.vectors, b.vectors)


def test_h3_usually_hits():
    rng = np.random.default_rng(16)
    hits = 0
    for _ in range(100):
        H = build_H3(3, 3, 0.05, rng=rng)
        hits += probe_hitting_ratio(H, 500, rng, "adversarial") >= H.tau
    assert hits >= 95


# serialization and bounds


def test_hitting_set_json(tmp_path):
    H = build_H2(3, "5/2")
    H.save(tmp_path / "h.json")
    loaded = HittingSet.load(tmp_path / "h.json")
    assert loaded.to_dict() == H.to_dict()
    assert H.to_dict()["p"] == "5/2"


def test_hitting_set_invariants():
    with pytest.raises(ValidationError):
        HittingSet(3, 2, [[1.0, 1.0]], 0.5, {"kind": "test"})
    with pytest.raises(ValidationError):
        HittingSet(3, 2, [[1.0, 0.0]], 1.5, {"kind": "test"})
    with pytest.raises(ValidationError):
        HittingSet(3, 2, np.zeros((0, 2)), 0.5, {"kind": "test"})


def test_cardinality_curve():
    rows = cardinality_curve([2.0, 5.0])
    assert len(rows) == 2
    first = rows[0]
    assert first["ratio"] == pytest.approx(0.5 * (2 / 9) ** (1 / 6))
    assert first["hh_bound"] == pytest.approx(4 * 3**1.5 / 2)
    assert all(row["hb_bound"] > 0 for row in rows)
