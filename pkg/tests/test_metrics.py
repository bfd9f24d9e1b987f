import json

import numpy as np
import pytest

from equicheck import (
    CountingProbe,
    DecoratedPointCloud,
    HeatmapTable,
    IrrepLabel,
    NumericalInconsistencyError,
    ProbeFunction,
    accumulate_heatmap,
    act,
    character_projection,
    character_projection_direct,
    constant_vector_probe,
    equivariance_error,
    equivariance_error_direct,
    oracle,
    pseudoscalar_Q,
    real_solid_harmonics,
    sum_rule_check,
)
from equicheck.metrics import SerializingProbe, mean_normalized
from equicheck.targets import chbrclf_geometry, random_band_limited_probe


@pytest.fixture
def cloud(rng):
    return DecoratedPointCloud(rng.normal(size=(5, 3)))


def invariant_probe():
    def f(x):
        u = x.positions - x.centroid
        return {"value": np.array([np.sum(u * u)])}

    return ProbeFunction(f, {"value": IrrepLabel(0, +1)})


def vector_sum_probe():
    def f(x):
        u = x.positions - x.centroid
        w = np.sum(u * u, axis=1)
        return {"value": w @ u}

    return ProbeFunction(f, {"value": IrrepLabel(1, +1)})


class TestEquivarianceError:
    def test_invariant_scalar_is_zero(self, cloud, grid2):
        a = equivariance_error(invariant_probe(), "value", IrrepLabel(0, 1), cloud, grid2)
        assert a <= 1e-9

    def test_constant_vector_schur(self, cloud, grid2):
        c = np.array([0.3, -1.1, 0.7])
        a = equivariance_error(constant_vector_probe(c), "value", IrrepLabel(1, 1), cloud, grid2)
        assert a == pytest.approx(np.linalg.norm(c), abs=1e-9)

    def test_pseudoscalar_q_is_zero(self, cloud, grid2):
        probe = ProbeFunction(lambda x: {"Q": [pseudoscalar_Q(x)]}, {})
        assert equivariance_error(probe, "Q", IrrepLabel(0, -1), cloud, grid2) <= 1e-9

    def test_requires_parity_grid(self, cloud):
        from equicheck import build_so3_grid

        with pytest.raises(ValueError):
            equivariance_error(invariant_probe(), "value", IrrepLabel(0, 1), cloud,
                               build_so3_grid(2))

    def test_dimension_must_block(self, cloud, grid2):
        with pytest.raises(ValueError):
            equivariance_error(invariant_probe(), "value", IrrepLabel(1, 1), cloud, grid2)

    def test_call_budget_is_grid_size(self, cloud, grid2):
        counter = CountingProbe(invariant_probe())
        equivariance_error(counter, "value", IrrepLabel(0, 1), cloud, grid2)
        assert counter.calls == len(grid2)

    def test_agrees_with_direct(self, cloud, grid1, rng):
        probe = random_band_limited_probe(rng, 1, out_dim=3)
        fast = equivariance_error(probe, "value", IrrepLabel(1, 1), cloud, grid1)
        slow = equivariance_error_direct(probe, "value", IrrepLabel(1, 1), cloud, grid1)
        assert fast == pytest.approx(slow, abs=1e-9)

    def test_frame_independence(self, cloud, grid2, rng):
        probe = random_band_limited_probe(rng, 2, out_dim=3)
        h = grid2.nodes[7]
        a0 = equivariance_error(probe, "value", IrrepLabel(1, 1), cloud, grid2)
        a1 = equivariance_error(probe, "value", IrrepLabel(1, 1), act(h, cloud), grid2)
        assert a0 == pytest.approx(a1, abs=1e-8)

    def test_contaminated_oracle_detected(self, cloud, grid2):
        eps = 1e-3
        inv = invariant_probe()
        c = np.array([1.0, 0.0, 0.0])

        def f(x):
            u = x.positions - x.centroid
            return {"value": (u[0] / np.linalg.norm(u[0]))[:1] * eps + inv(x)["value"]}

        probe = ProbeFunction(f, {})
        a = equivariance_error(probe, "value", IrrepLabel(0, 1), cloud, grid2)
        assert a >= eps / 2


class TestCharacterProjection:
    def test_constant_scalar(self, cloud, grid2):
        probe = ProbeFunction(lambda x: {"value": np.array([2.5])}, {})
        rep = character_projection(probe, "value", cloud, grid2, 2)
        assert rep.projections[IrrepLabel(0, 1)] == pytest.approx(6.25, abs=1e-10)
        for a, v in rep.projections.items():
            if a != IrrepLabel(0, 1):
                assert abs(v) < 1e-10

    def test_pure_vector(self, cloud, grid2):
        probe = vector_sum_probe()
        v = probe(cloud)["value"]
        rep = character_projection(probe, "value", cloud, grid2, 2)
        assert rep.projections[IrrepLabel(1, 1)] == pytest.approx(float(v @ v), rel=1e-9)
        assert rep.total_norm == pytest.approx(float(v @ v), rel=1e-9)

    def test_pseudoscalar_q(self, cloud, grid2):
        probe = ProbeFunction(lambda x: {"Q": [pseudoscalar_Q(x)]}, {})
        rep = character_projection(probe, "Q", cloud, grid2, 2)
        assert rep.normalized[IrrepLabel(0, -1)] == pytest.approx(1.0, abs=1e-9)

    def test_concatenated_scalar_vector(self, cloud, grid2):
        inv, vec = invariant_probe(), vector_sum_probe()

        def f(x):
            return {"value": np.concatenate([inv(x)["value"], vec(x)["value"]])}

        probe = ProbeFunction(f, {})
        s = inv(cloud)["value"][0]
        v = vec(cloud)["value"]
        rep = character_projection(probe, "value", cloud, grid2, 2)
        assert rep.projections[IrrepLabel(0, 1)] == pytest.approx(s * s, rel=1e-9)
        assert rep.projections[IrrepLabel(1, 1)] == pytest.approx(float(v @ v), rel=1e-9)
        assert abs(sum_rule_check(rep)) <= 1e-9

    def test_agrees_with_direct(self, cloud, grid1, rng):
        probe = random_band_limited_probe(rng, 1, out_dim=4)
        rep = character_projection(probe, "value", cloud, grid1, 1)
        for lam in range(2):
            for sigma in (1, -1):
                label = IrrepLabel(lam, sigma)
                direct = character_projection_direct(probe, "value", cloud, grid1, label)
                assert rep.projections[label] == pytest.approx(
                    direct, abs=1e-9 * max(1.0, rep.total_norm)
                )

    def test_nonnegative_and_bounded(self, cloud, grid2, rng):
        probe = random_band_limited_probe(rng, 2, out_dim=4)
        rep = character_projection(probe, "value", cloud, grid2, 2)
        for v in rep.projections.values():
            assert v >= -1e-9
        assert sum(rep.projections.values()) <= rep.total_norm + 1e-9

    def test_call_budget(self, cloud, grid2):
        counter = CountingProbe(invariant_probe())
        character_projection(counter, "value", cloud, grid2, 2)
        assert counter.calls == len(grid2)

    def test_capacity_error(self, cloud, grid2):
        from equicheck import GridCapacityError

        with pytest.raises(GridCapacityError):
            character_projection(invariant_probe(), "value", cloud, grid2, 3)

    def test_frame_independence(self, cloud, grid2, rng):
        probe = random_band_limited_probe(rng, 2, out_dim=4)
        h = grid2.nodes[11]
        r0 = character_projection(probe, "value", cloud, grid2, 2)
        r1 = character_projection(probe, "value", act(h, cloud), grid2, 2)
        for a in r0.projections:
            assert r0.projections[a] == pytest.approx(
                r1.projections[a], abs=1e-8 * max(1.0, r0.total_norm)
            )


class TestSumRule:
    def test_band_limited_residual(self, cloud, grid4, rng):
        probe = random_band_limited_probe(rng, 3, out_dim=4)
        rep = character_projection(probe, "value", cloud, grid4, 4)
        assert abs(sum_rule_check(rep)) <= 1e-9

    def test_above_cap_block_residual_is_one(self, cloud, grid4):
        def f(x):
            u = x.positions - x.centroid
            blocks = real_solid_harmonics(u, 5)[5]
            return {"value": np.sum(blocks * np.sum(u * u, axis=1)[:, None], axis=0)}

        rep = character_projection(ProbeFunction(f, {}), "value", cloud, grid4, 4)
        assert sum_rule_check(rep) == pytest.approx(1.0, abs=1e-9)

    def test_zero_function_degenerate(self, cloud, grid2):
        probe = ProbeFunction(lambda x: {"value": np.zeros(2)}, {})
        rep = character_projection(probe, "value", cloud, grid2, 2)
        assert rep.degenerate
        assert all(v == 0.0 for v in rep.normalized.values())
        assert sum_rule_check(rep) == 0.0


class TestHeatmap:
    def test_single_column(self, cloud, grid2):
        rep = character_projection(invariant_probe(), "value", cloud, grid2, 2)
        table = HeatmapTable(2)
        accumulate_heatmap(table, 0, "head", rep)
        assert table.columns[("head", 0)] == rep.normalized

    def test_mean_of_normalized(self, cloud, grid2, rng):
        other = DecoratedPointCloud(rng.normal(size=(5, 3)))
        reps = [
            character_projection(invariant_probe(), "value", c, grid2, 2)
            for c in (cloud, other)
        ]
        table = HeatmapTable(2)
        accumulate_heatmap(table, 3, "head", reps)
        assert table.columns[("head", 3)] == mean_normalized(reps)

    def test_untrained_slot_sorts_first(self, cloud, grid2):
        rep = character_projection(invariant_probe(), "value", cloud, grid2, 2)
        table = HeatmapTable(2)
        accumulate_heatmap(table, 5, "head", rep)
        accumulate_heatmap(table, HeatmapTable.UNTRAINED, "head", rep)
        assert table.epochs() == [HeatmapTable.UNTRAINED, 5]

    def test_lambda_max_mismatch(self, cloud, grid2):
        rep = character_projection(invariant_probe(), "value", cloud, grid2, 2)
        with pytest.raises(ValueError):
            accumulate_heatmap(HeatmapTable(4), 0, "head", rep)

    def test_csv_has_17_digit_decimals(self, cloud, grid2):
        rep = character_projection(invariant_probe(), "value", cloud, grid2, 2)
        table = HeatmapTable(2)
        accumulate_heatmap(table, 0, "head", rep)
        lines = table.to_csv().splitlines()
        assert lines[0] == "layer,epoch,lambda,sigma,value"
        value = lines[1].split(",")[4]
        assert float(value) == rep.normalized[IrrepLabel(0, 1)]


class TestProbeAdapters:
    def test_probe_determinism(self, cloud, rng):
        probe = random_band_limited_probe(rng, 2, out_dim=4)
        a = probe(cloud)["value"]
        b = probe(cloud)["value"]
        assert np.array_equal(a, b)

    def test_serializing_adapter_passthrough(self, cloud):
        probe = SerializingProbe(invariant_probe())
        assert np.array_equal(probe(cloud)["value"], invariant_probe()(cloud)["value"])

    def test_spectrum_report_json(self, cloud, grid2):
        rep = character_projection(invariant_probe(), "value", cloud, grid2, 2)
        payload = rep.to_json_dict()
        assert payload["output"] == "value"
        assert len(payload["projections"]) == 6
        json.dumps(payload)  # serializable
