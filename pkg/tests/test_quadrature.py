import json

import numpy as np
import pytest

from equicheck import (
    GridCapacityError,
    GroupElement,
    IrrepLabel,
    build_so3_grid,
    character,
    extend_to_o3,
    haar_average,
    max_band_limit,
    orthogonality_residual,
    random_group_element,
    wigner_d,
)
from equicheck.lebedev import available_precisions, lebedev_grid
from equicheck.quadrature import grid_from_json, grid_to_json


class TestLebedev:
    @pytest.mark.parametrize("precision", available_precisions())
    def test_exact_for_spherical_polynomials(self, precision):
        pts, w = lebedev_grid(precision)
        assert w.sum() == pytest.approx(1.0, abs=1e-13)
        assert np.max(np.abs(np.linalg.norm(pts, axis=1) - 1.0)) < 1e-12
        # surface averages of monomials x^a y^b z^c are known in closed form
        rng = np.random.default_rng(precision)
        for _ in range(20):
            exps = rng.integers(0, precision // 2 + 1, size=3)
            while exps.sum() > precision:
                exps = rng.integers(0, precision // 2 + 1, size=3)
            a, b, c = (int(e) for e in exps)
            approx = float(w @ (pts[:, 0] ** a * pts[:, 1] ** b * pts[:, 2] ** c))
            if a % 2 or b % 2 or c % 2:
                exact = 0.0
            else:
                def dfact(n):
                    out = 1
                    while n > 1:
                        out *= n
                        n -= 2
                    return out

                exact = (
                    dfact(a - 1) * dfact(b - 1) * dfact(c - 1) / dfact(a + b + c + 1)
                )
            assert approx == pytest.approx(exact, abs=1e-12)

    def test_unknown_precision(self):
        with pytest.raises(KeyError):
            lebedev_grid(4)


class TestBuildGrid:
    def test_band_limit_zero(self):
        grid = build_so3_grid(0)
        mean = haar_average(grid, lambda g: np.array([1.0]))
        assert mean[0] == pytest.approx(1.0)

    @pytest.mark.parametrize("scheme", ["lebedev_trapezoid", "gauss_product"])
    def test_orthogonality_band4(self, scheme):
        grid = build_so3_grid(4, scheme)
        assert orthogonality_residual(grid, 4) < 1e-10

    def test_character_schur(self):
        grid = build_so3_grid(4)
        for lam in range(5):
            avg = haar_average(
                grid, lambda g, lam=lam: np.array([character(IrrepLabel(lam, 1), g)])
            )
            assert avg[0] == pytest.approx(1.0 if lam == 0 else 0.0, abs=1e-10)

    def test_character_irreducibility(self):
        grid = build_so3_grid(4)
        avg = haar_average(
            grid, lambda g: np.array([character(IrrepLabel(2, 1), g) ** 2])
        )
        assert avg[0] == pytest.approx(1.0, abs=1e-10)

    def test_capacity_error_names_maximum(self):
        with pytest.raises(GridCapacityError, match=str(max_band_limit())):
            build_so3_grid(max_band_limit() + 1)

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            build_so3_grid(2, "monte_carlo")

    def test_schemes_agree_on_band_limited_averages(self, rng):
        g_leb = build_so3_grid(3, "lebedev_trapezoid")
        g_gau = build_so3_grid(3, "gauss_product")
        M = rng.normal(size=(7, 7))

        def f(g):
            D = wigner_d(IrrepLabel(3, 1), g).matrix
            return np.array([np.sum(M * D), np.trace(D @ D.T @ D)])

        assert np.max(np.abs(haar_average(g_leb, f) - haar_average(g_gau, f))) < 1e-10

    def test_left_invariance(self, rng):
        grid = build_so3_grid(2)
        h = grid.nodes[17]

        def f(g):
            return wigner_d(IrrepLabel(2, 1), g).matrix.ravel()

        a = haar_average(grid, f)
        b = haar_average(grid, lambda g: f(h.compose(g)))
        assert np.max(np.abs(a - b)) < 1e-10


class TestExtendToO3:
    def test_doubling_and_pairing(self, grid2):
        so3 = build_so3_grid(2)
        assert len(grid2) == 2 * len(so3)
        assert grid2.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert grid2.covers_parity
        for i in range(0, 6, 2):
            assert not grid2.nodes[i].parity
            assert grid2.nodes[i + 1].parity
            assert np.array_equal(grid2.nodes[i].rotation, grid2.nodes[i + 1].rotation)

    def test_parity_sign_averages_to_zero(self, grid2):
        avg = haar_average(grid2, lambda g: np.array([-1.0 if g.parity else 1.0]))
        assert abs(avg[0]) < 1e-12

    def test_pseudoscalar_integrates_to_zero(self, grid2):
        avg = haar_average(grid2, lambda g: np.array([np.linalg.det(g.matrix())]))
        assert abs(avg[0]) < 1e-12

    def test_cross_parity_orthogonality(self, grid2):
        assert orthogonality_residual(grid2, 2) < 1e-10

    def test_double_extension_rejected(self, grid2):
        with pytest.raises(ValueError):
            extend_to_o3(grid2)


class TestRandomGroupElement:
    def test_unit_quaternion_rotations(self, rng):
        for _ in range(50):
            g = random_group_element(rng)
            R = g.rotation
            assert np.max(np.abs(R.T @ R - np.eye(3))) < 1e-12
            assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)

    def test_haar_mean_is_zero_matrix(self, rng):
        n = 20000
        acc = np.zeros((3, 3))
        for _ in range(n):
            acc += random_group_element(rng).rotation
        # component std is ~sqrt(1/3); allow 4 standard errors
        assert np.max(np.abs(acc / n)) < 4.0 * np.sqrt(1.0 / 3.0 / n)

    def test_parity_fair_coin(self, rng):
        n = 20000
        improper = sum(random_group_element(rng, include_parity=True).parity for _ in range(n))
        assert abs(improper / n - 0.5) < 4.0 * 0.5 / np.sqrt(n)


class TestGridJson:
    def test_round_trip(self, grid2):
        text = grid_to_json(grid2)
        back = grid_from_json(text)
        assert len(back) == len(grid2)
        assert back.band_limit == grid2.band_limit
        assert back.covers_parity
        assert np.max(np.abs(back.weights - grid2.weights)) == 0.0
        for a, b in zip(grid2.nodes, back.nodes):
            assert a.parity == b.parity
            assert np.max(np.abs(a.rotation - b.rotation)) < 1e-14

    def test_payload_shape(self, grid2):
        payload = json.loads(grid_to_json(grid2))
        assert payload["band_limit"] == 2
        node = payload["nodes"][0]
        assert set(node) == {"quaternion", "parity", "weight"}
