import numpy as np
import pytest

from oracles import lp_by_vertices
from vkdpc.polytope import EmptyPolytopeError, Polytope, hausdorff, polytope_pre, polytope_reduce

BOX2 = Polytope.symmetric_box(1.0, 2)


def same_set(P, Q, tol=1e-9):
    return P.is_subset(Q, tol) and Q.is_subset(P, tol)


def random_polygon(rng, m=8):
    ang = np.sort(rng.uniform(0, 2 * np.pi, m))
    A = np.column_stack([np.cos(ang), np.sin(ang)])
    return Polytope(A, rng.uniform(0.5, 2.0, m)).intersect(Polytope.symmetric_box(3.0, 2))


def test_rows_normalised_and_zero_rows():
    P = Polytope([[2.0, 0.0], [0.0, 0.0]], [4.0, 1.0])
    np.testing.assert_allclose(P.A, [[1.0, 0.0]])
    np.testing.assert_allclose(P.b, [2.0])
    E = Polytope([[0.0, 0.0]], [-1.0])
    assert E.is_empty()


def test_membership_and_violation():
    assert BOX2.contains([0.5, -0.9]) and not BOX2.contains([1.1, 0.0])
    assert BOX2.violation([0.0, 0.0]) == pytest.approx(-1.0)


def test_translate_and_scale():
    T = BOX2.translate([1.0, 0.0])
    assert T.contains([1.9, 0.0]) and not T.contains([-0.5, 0.0])
    assert same_set(BOX2.scale(2.0), Polytope.symmetric_box(2.0, 2))


def test_pre_identity_half_and_zero():
    assert same_set(polytope_pre(np.eye(2), BOX2), BOX2)
    assert same_set(polytope_pre(0.5 * np.eye(2), BOX2), Polytope.symmetric_box(2.0, 2))
    Z = polytope_pre(np.zeros((2, 2)), BOX2)
    assert Z.n_rows == 0  # full space
    with pytest.raises(ValueError):
        polytope_pre(np.eye(3), BOX2)


def test_reduce_duplicate_and_slack_rows():
    dup = Polytope(np.vstack([BOX2.A, BOX2.A[:1]]), np.concatenate([BOX2.b, BOX2.b[:1]]))
    assert polytope_reduce(dup).n_rows == 4
    slack = BOX2.intersect(Polytope([[1.0, 0.0]], [5.0]))
    red = polytope_reduce(slack)
    assert red.n_rows == 4 and same_set(red, BOX2)


def test_reduce_empty_raises():
    with pytest.raises(EmptyPolytopeError):
        polytope_reduce(Polytope([[1.0], [-1.0]], [-1.0, -1.0]))


def test_reduce_keeps_vertices(rng):
    for _ in range(15):
        P = random_polygon(rng)
        red = polytope_reduce(P)
        V1 = P.vertices()
        V2 = red.vertices()
        assert len(V1) == len(V2) == red.n_rows
        np.testing.assert_allclose(V1, V2, atol=1e-9)


def test_reduce_deterministic_row_order(rng):
    P = random_polygon(rng)
    perm = rng.permutation(P.n_rows)
    Q = Polytope(P.A[perm], P.b[perm])
    a, b = polytope_reduce(P), polytope_reduce(Q)
    assert np.array_equal(a.A, b.A) and np.array_equal(a.b, b.b)


def test_support_and_lp_oracle(rng):
    for _ in range(10):
        P = random_polygon(rng)
        d = rng.normal(size=2)
        assert P.support(d) == pytest.approx(-lp_by_vertices(-d, P.A, P.b), abs=1e-8)
        assert P.support(d) == pytest.approx((P.vertices() @ d).max(), abs=1e-8)


def test_chebyshev_and_emptiness():
    c, r = BOX2.chebyshev()
    np.testing.assert_allclose(c, 0.0, atol=1e-9)
    assert r == pytest.approx(1.0)
    assert BOX2.has_interior_point()
    assert not Polytope([[1.0], [-1.0]], [0.0, 0.0]).has_interior_point()


def test_vertices_and_polygon():
    V = BOX2.vertices()
    assert len(V) == 4
    poly = BOX2.polygon()
    # counter-clockwise: positive signed area
    x, y = poly[:, 0], poly[:, 1]
    assert 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) == pytest.approx(4.0)
    assert BOX2.diameter() == pytest.approx(2 * np.sqrt(2))


def test_slice():
    cube = Polytope.symmetric_box([1.0, 2.0, 3.0], 3)
    s = cube.slice(0, 0.5)
    assert same_set(s, Polytope.symmetric_box([2.0, 3.0], 2))


def test_projection_and_distance():
    np.testing.assert_allclose(BOX2.project_point([3.0, 0.5]), [1.0, 0.5], atol=1e-8)
    assert BOX2.distance([3.0, 0.5]) == pytest.approx(2.0, abs=1e-8)
    assert BOX2.distance([0.1, 0.1]) == 0.0


def test_hausdorff():
    assert hausdorff(BOX2, BOX2) == pytest.approx(0.0, abs=1e-9)
    assert hausdorff(BOX2, BOX2.translate([0.5, 0.0])) == pytest.approx(0.5, abs=1e-8)
    assert hausdorff(BOX2, Polytope.symmetric_box(2.0, 2)) == pytest.approx(np.sqrt(2), abs=1e-8)


def test_csv_roundtrip(tmp_path):
    P = polytope_reduce(Polytope.symmetric_box([1.0, 2.0, 0.5], 3))
    P.to_csv(tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "a1,a2,a3,b"
    Q = Polytope.from_csv(tmp_path / "p.csv")
    assert np.array_equal(P.A, Q.A) and np.array_equal(P.b, Q.b)
    P.vertices_to_csv(tmp_path / "v.csv")
    assert len((tmp_path / "v.csv").read_text().splitlines()) == 9
