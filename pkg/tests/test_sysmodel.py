import json

import numpy as np
import pytest

from dccmkit.errors import FileFormatError
from dccmkit.polyalg import PolyMatrix, Polynomial
from dccmkit.sysmodel import (
    Box,
    ControlAffineSystem,
    cstr,
    load_system,
    save_system,
    system_from_dict,
    system_to_dict,
)


def cstr_step_reference(x, u):
    # hand-written one-step map used as the oracle
    x1, x2 = x
    return np.array([1.1 * x1 - 0.1 * x1 * x2 + u[0], 0.9 * x2 + 0.1 * x1])


def test_cstr_fixed_points():
    sys = cstr()
    np.testing.assert_allclose(sys.step([0.0, 0.0], [0.0]), [0.0, 0.0], atol=0)
    np.testing.assert_allclose(sys.step([1.0, 1.0], [0.0]), [1.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(sys.step([0.5, 0.5], [-0.025]), [0.5, 0.5], atol=1e-15)


def test_cstr_step_matches_reference():
    sys = cstr()
    rng = np.random.default_rng(5)
    for _ in range(20):
        x = rng.uniform(-2, 2, size=2)
        u = rng.uniform(-1, 1, size=1)
        np.testing.assert_allclose(sys.step(x, u), cstr_step_reference(x, u), rtol=1e-14)


def test_batch_step_matches_loop():
    sys = cstr()
    rng = np.random.default_rng(9)
    X = rng.uniform(-1, 2, size=(30, 2))
    U = rng.uniform(-1, 1, size=(30, 1))
    batch = sys.step(X, U)
    for k in range(30):
        np.testing.assert_allclose(batch[k], sys.step(X[k], U[k]), atol=1e-14)


def test_cstr_linearization_symbolic():
    sys = cstr()
    A, B = sys.linearize()
    # A = [[1.1 - 0.1 x2, -0.1 x1], [0.1, 0.9]] over (x1, x2, u)
    assert A[0, 0].terms == {(0, 0, 0): 1.1, (0, 1, 0): -0.1}
    assert A[0, 1].terms == {(1, 0, 0): -0.1}
    assert A[1, 0].terms == {(0, 0, 0): 0.1}
    assert A[1, 1].terms == {(0, 0, 0): 0.9}
    assert B[0, 0].terms == {(0, 0, 0): 1.0}
    assert B[1, 0].is_zero()


def test_input_jacobian_equals_g_exactly():
    # the one-step map is affine in u, so d(step)/du_j must equal g[:, j] symbolically
    sys = cstr()
    h = sys.closed_loop_polys()
    nm = sys.n + sys.m
    for i in range(sys.n):
        for j in range(sys.m):
            assert h[i].diff(sys.n + j) == sys.g[i, j].extend(nm)


def test_a_matrix_against_central_differences():
    sys = cstr()
    rng = np.random.default_rng(13)
    h = 1e-6
    for _ in range(10):
        x = rng.uniform(-1, 2, size=2)
        u = rng.uniform(-1, 1, size=1)
        A = sys.a_at(x, u)
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd = (sys.step(x + e, u) - sys.step(x - e, u)) / (2 * h)
            np.testing.assert_allclose(A[:, j], fd, atol=1e-8)


def test_b_matrix_matches_input_difference():
    sys = cstr()
    rng = np.random.default_rng(17)
    for _ in range(10):
        x = rng.uniform(-1, 2, size=2)
        u = rng.uniform(-1, 1, size=1)
        B = sys.b_at(x)
        du = np.array([0.5])
        exact = sys.step(x, u + du) - sys.step(x, u)
        np.testing.assert_allclose(B @ du, exact, atol=1e-14)


def test_batch_jacobians():
    sys = cstr()
    rng = np.random.default_rng(21)
    X = rng.uniform(-1, 2, size=(12, 2))
    U = rng.uniform(-1, 1, size=(12, 1))
    Ab = sys.a_at(X, U)
    Bb = sys.b_at(X)
    assert Ab.shape == (12, 2, 2)
    assert Bb.shape == (12, 2, 1)
    for k in range(12):
        np.testing.assert_allclose(Ab[k], sys.a_at(X[k], U[k]), atol=1e-14)
        np.testing.assert_allclose(Bb[k], sys.b_at(X[k]), atol=1e-14)


def test_box_validation_and_grid():
    with pytest.raises(ValueError):
        Box([0.0, 0.0], [1.0, 0.0])
    box = Box([-0.5, -0.5], [1.5, 1.5])
    axes = box.axes(21)
    assert len(axes) == 2
    assert axes[0][0] == -0.5 and axes[0][-1] == 1.5
    assert len(axes[0]) == 21
    assert box.contains([0.0, 1.0])
    assert not box.contains([2.0, 0.0])


def test_constructor_validation():
    f_ok = [Polynomial.variable(2, 0), Polynomial.variable(2, 1)]
    g_ok = PolyMatrix([[Polynomial.constant(2, 1.0)], [Polynomial.zero(2)]])
    ControlAffineSystem(f_ok, g_ok)
    with pytest.raises(ValueError):
        ControlAffineSystem([Polynomial.variable(3, 0)], g_ok)
    with pytest.raises(ValueError):
        ControlAffineSystem(f_ok, PolyMatrix([[Polynomial.constant(3, 1.0)]] * 3))
    with pytest.raises(ValueError):
        ControlAffineSystem(f_ok, g_ok, domain=Box([0.0], [1.0]))


# ------------------------------------------------------------------ serialization


def test_system_json_round_trip(tmp_path):
    sys = cstr()
    path = tmp_path / "sys.json"
    save_system(sys, path)
    loaded = load_system(path)
    assert loaded.n == 2 and loaded.m == 1
    for i in range(2):
        assert loaded.f[i] == sys.f[i]
        assert loaded.g[i, 0] == sys.g[i, 0]
    np.testing.assert_array_equal(loaded.domain.lo, sys.domain.lo)
    np.testing.assert_array_equal(loaded.domain.hi, sys.domain.hi)


def test_round_trip_through_dict_is_exact():
    sys = cstr()
    again = system_from_dict(json.loads(json.dumps(system_to_dict(sys))))
    for i in range(2):
        assert again.f[i].terms == sys.f[i].terms


def test_load_reports_pointer_for_missing_key(tmp_path):
    obj = system_to_dict(cstr())
    del obj["f"]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(obj))
    with pytest.raises(FileFormatError) as err:
        load_system(path)
    assert err.value.pointer == "/f"


def test_load_reports_pointer_for_bad_coeff_length(tmp_path):
    obj = system_to_dict(cstr())
    obj["f"][0]["coeffs"] = [1.0, 2.0]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(obj))
    with pytest.raises(FileFormatError) as err:
        load_system(path)
    assert err.value.pointer == "/f/0/coeffs"
    assert str(path) in str(err.value)


def test_load_reports_pointer_for_bad_domain(tmp_path):
    obj = system_to_dict(cstr())
    obj["domain"]["hi"] = [-1.0, -1.0]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(obj))
    with pytest.raises(FileFormatError) as err:
        load_system(path)
    assert err.value.pointer == "/domain"


def test_load_rejects_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(FileFormatError):
        load_system(path)


def test_golden_system_file_matches_builtin():
    # the checked-in reactor file pins the on-disk format; drift in the
    # serializer shows up as a behavioral mismatch here
    from pathlib import Path

    golden = Path(__file__).parent / "data" / "cstr_system.json"
    loaded = load_system(golden)
    built = cstr()
    assert (loaded.n, loaded.m) == (built.n, built.m)
    np.testing.assert_allclose(loaded.domain.lo, built.domain.lo)
    np.testing.assert_allclose(loaded.domain.hi, built.domain.hi)
    rng = np.random.default_rng(33)
    for _ in range(20):
        x = rng.uniform(-0.5, 1.5, size=2)
        u = rng.uniform(-0.2, 0.2, size=1)
        np.testing.assert_array_equal(loaded.step(x, u), built.step(x, u))
    assert system_to_dict(loaded) == system_to_dict(built)
