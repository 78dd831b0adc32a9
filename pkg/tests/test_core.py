import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from plsagg.core import (
    DesignMatrix,
    InvalidInputError,
    TargetVector,
    WeightVector,
    combine,
    empirical_norm_sq,
    gram,
    rss,
)

from conftest import orthonormal_design, random_design


def test_empirical_norm_examples():
    assert empirical_norm_sq(np.zeros(5)) == 0.0
    assert empirical_norm_sq([1, 1, 1, 1]) == 1.0
    assert empirical_norm_sq([3, 4]) == 12.5
    with pytest.raises(InvalidInputError):
        empirical_norm_sq([])


def test_combine_examples():
    F = np.array([[1.0, 2.0], [-0.5, 0.25], [0.0, 3.0]])
    D = DesignMatrix(F)
    assert np.array_equal(combine(D, WeightVector.zeros(2)), np.zeros(3))
    assert np.array_equal(combine(D, WeightVector.vertex(2, 1)), F[:, 1])
    expected = [F[i, 0] - F[i, 1] for i in range(3)]
    assert np.allclose(combine(D, [1.0, -1.0]), expected, rtol=0, atol=1e-15)
    with pytest.raises(InvalidInputError):
        combine(D, [1.0, 2.0, 3.0])


def test_rss_examples(rng):
    D = random_design(rng, 7, 3)
    lam = np.array([0.2, -0.4, 0.9])
    assert rss(D, combine(D, lam), lam) == 0.0
    y = rng.standard_normal(7)
    assert rss(D, y, np.zeros(3)) == pytest.approx(empirical_norm_sq(y), abs=0)

    O = orthonormal_design(rng, 9, 3)
    y = rng.standard_normal(9)
    direct = sum((y[i] - O.values[i, 0]) ** 2 for i in range(9)) / 9
    closed = empirical_norm_sq(y) - 2 * float(y @ O.values[:, 0]) / 9 + 1
    assert rss(O, y, WeightVector.vertex(3, 0)) == pytest.approx(direct, abs=1e-12)
    assert closed == pytest.approx(direct, abs=1e-12)
    with pytest.raises(InvalidInputError):
        rss(D, np.zeros(6), lam)


def test_gram_examples(rng):
    O = orthonormal_design(rng, 12, 4)
    g = gram(O)
    assert np.allclose(g.psi, np.eye(4), atol=1e-12)
    assert g.xi_min == pytest.approx(1.0, abs=1e-12)
    assert g.xi_max == pytest.approx(1.0, abs=1e-12)

    F = rng.uniform(-1, 1, size=(10, 3))
    F[:, 2] = F[:, 0]
    assert gram(DesignMatrix(F)).xi_min == pytest.approx(0.0, abs=1e-10)

    # psi = [[1, .5], [.5, 1]] from an explicit 4-point design
    F = np.array([[1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [1.0, -1.0]])
    g = gram(DesignMatrix(F))
    assert np.allclose(g.psi, [[1.0, 0.5], [0.5, 1.0]])
    assert g.xi_min == pytest.approx(0.5, abs=1e-12)
    assert g.xi_max == pytest.approx(1.5, abs=1e-12)


def test_design_validation():
    with pytest.raises(InvalidInputError):
        DesignMatrix(np.ones((3, 1)))
    with pytest.raises(InvalidInputError):
        DesignMatrix(np.full((3, 2), 2.0), bound_l=1.0)
    D = DesignMatrix(np.array([[0.5, -2.0], [1.0, 0.0]]))
    assert D.bound_inferred and D.bound_l == 2.0
    assert not DesignMatrix(np.ones((2, 2)), bound_l=1.0).bound_inferred
    assert not D.values.flags.writeable


def test_weight_vector_support():
    w = WeightVector([0.0, 1.5, 0.0, -2.0])
    assert w.support == (1, 3)
    assert w.sparsity == 2
    assert WeightVector.zeros(3).sparsity == 0


def test_csv_roundtrip(tmp_path, rng):
    D = random_design(rng, 5, 3)
    D.to_csv(tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "j0,j1,j2"
    back = DesignMatrix.from_csv(tmp_path / "d.csv")
    assert np.array_equal(back.values, D.values)
    assert back.bound_inferred

    t = TargetVector(rng.uniform(-1, 1, 5), rng.standard_normal(5))
    t.to_csv(tmp_path / "t.csv")
    back = TargetVector.from_csv(tmp_path / "t.csv")
    assert np.array_equal(back.f_vals, t.f_vals) and np.array_equal(back.y_vals, t.y_vals)


def test_csv_errors(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(InvalidInputError):
        DesignMatrix.from_csv(tmp_path / "bad.csv")
    (tmp_path / "bad2.csv").write_text("j0,j1\n1,x\n")
    with pytest.raises(InvalidInputError):
        DesignMatrix.from_csv(tmp_path / "bad2.csv")
    with pytest.raises(InvalidInputError):
        DesignMatrix.from_csv(tmp_path / "missing.csv")


finite = st.floats(-1, 1, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(
    F=arrays(np.float64, (6, 3), elements=finite),
    lam=arrays(np.float64, 3, elements=st.floats(-5, 5)),
    mu=arrays(np.float64, 3, elements=st.floats(-5, 5)),
    c=st.floats(-5, 5),
)
def test_combine_linear(F, lam, mu, c):
    D = DesignMatrix(F, bound_l=1.0)
    lhs = combine(D, c * lam + mu)
    rhs = c * combine(D, lam) + combine(D, mu)
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(F=arrays(np.float64, (8, 4), elements=finite),
       lam=arrays(np.float64, 4, elements=st.floats(-3, 3)))
def test_norm_quadratic_form_and_rayleigh(F, lam):
    D = DesignMatrix(F, bound_l=1.0)
    g = gram(D)
    val = empirical_norm_sq(combine(D, lam))
    assert val == pytest.approx(float(lam @ g.psi @ lam), abs=1e-10)
    l2 = float(lam @ lam)
    assert g.xi_min * l2 - 1e-10 <= val <= g.xi_max * l2 + 1e-10
    assert g.xi_min <= g.xi_max
    # diagonal entries sit between the extreme eigenvalues and below L^2
    assert np.all(np.diag(g.psi) <= 1.0 + 1e-12)
    assert np.all(np.diag(g.psi) >= g.xi_min - 1e-12)
