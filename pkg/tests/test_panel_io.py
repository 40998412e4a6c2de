import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnfactor.errors import ConfigError, FormatError
from nnfactor.extract import FactorEstimate
from nnfactor.panel_io import (DesignSpec, PanelSchema, build_design,
                               load_estimate, load_panel, rank_transform,
                               save_estimate)
from nnfactor.problems import SEMIPARAMETRIC, UNCONSTRAINED, ModelFamily
from nnfactor.solver import SolverReport


def write_csv(tmp_path, text, name="panel.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadPanel:
    def test_fully_observed(self, tmp_path):
        path = write_csv(tmp_path, (
            "asset_id,period,return,size\n"
            "a,1,0.10,1.0\n"
            "a,2,0.20,2.0\n"
            "b,1,0.30,3.0\n"
            "b,2,0.40,4.0\n"))
        table = load_panel(path)
        assert table.assets == ("a", "b") and table.periods == ("1", "2")
        assert table.returns[0, 0] == 0.10 and table.returns[1, 1] == 0.40
        panel = build_design(table, DesignSpec(raw_columns=("size",)))
        assert panel.mask.all()

    def test_absent_pair_masked(self, tmp_path):
        path = write_csv(tmp_path, (
            "asset_id,period,return\n"
            "a,1,0.1\na,2,0.2\nb,2,0.4\n"))
        table = load_panel(path)
        panel = build_design(table, DesignSpec())
        assert not panel.mask[1, 0]  # (b, period 1) was never in the file
        assert panel.mask.sum() == 3

    def test_blank_return_masks_cell(self, tmp_path):
        path = write_csv(tmp_path, (
            "asset_id,period,return,size\n"
            "a,1,0.1,1.0\n"
            "a,2,0.2,2.0\n"
            "a,3,,3.0\n"
            "b,1,0.3,4.0\n"
            "b,2,0.4,\n"
            "b,3,0.5,6.0\n"))
        table = load_panel(path)
        panel = build_design(table, DesignSpec(raw_columns=("size",)))
        assert not panel.mask[0, 2]  # blank return
        assert not panel.mask[1, 1]  # blank characteristic
        assert panel.mask.sum() == 4
        # hand-built reference
        expect_y = np.array([[0.1, 0.2, 0.0], [0.3, 0.0, 0.5]])
        assert np.allclose(panel.y, expect_y)
        assert np.allclose(panel.x[1, 2], [1.0, 6.0])

    def test_duplicate_key_rejected(self, tmp_path):
        path = write_csv(tmp_path, (
            "asset_id,period,return\n"
            "a,1,0.1\na,1,0.2\n"))
        with pytest.raises(FormatError, match="duplicate"):
            load_panel(path)

    def test_unparseable_numeric_with_location(self, tmp_path):
        path = write_csv(tmp_path, (
            "asset_id,period,return\n"
            "a,1,0.1\nb,1,oops\n"))
        with pytest.raises(FormatError, match=r":3: .*return.*oops"):
            load_panel(path)

    def test_missing_required_column(self, tmp_path):
        path = write_csv(tmp_path, "asset_id,period\n a,1\n")
        with pytest.raises(FormatError, match="return"):
            load_panel(path)

    def test_numeric_period_sorting(self, tmp_path):
        path = write_csv(tmp_path, (
            "asset_id,period,return\n"
            "a,10,0.1\na,2,0.2\na,9,0.3\n"))
        table = load_panel(path)
        assert table.periods == ("2", "9", "10")

    def test_custom_schema(self, tmp_path):
        path = write_csv(tmp_path, (
            "stock,month,ret,bm\n"
            "a,1,0.1,0.5\nb,1,0.2,0.6\n"))
        schema = PanelSchema(asset_col="stock", period_col="month", return_col="ret")
        table = load_panel(path, schema)
        assert list(table.characteristics) == ["bm"]


class TestRankTransform:
    def test_three_points(self):
        assert np.allclose(rank_transform([10.0, 20.0, 30.0]), [-0.5, 0.0, 0.5])

    def test_all_equal(self):
        assert np.allclose(rank_transform([7.0] * 4), [0.0] * 4)

    def test_average_rank_ties(self):
        # values (5, 5, 9): ranks (1.5, 1.5, 3) -> (-0.25, -0.25, 0.5)
        assert np.allclose(rank_transform([5.0, 5.0, 9.0]), [-0.25, -0.25, 0.5])

    def test_single_observation(self):
        assert rank_transform([3.0])[0] == 0.0

    def test_nan_passthrough(self):
        out = rank_transform([1.0, np.nan, 2.0])
        assert np.isnan(out[1]) and np.allclose(out[[0, 2]], [-0.5, 0.5])

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=12))
    def test_range_and_monotone(self, values):
        out = rank_transform(values)
        assert np.all(out >= -0.5 - 1e-12) and np.all(out <= 0.5 + 1e-12)
        order = np.argsort(values, kind="stable")
        sorted_out = out[order]
        assert np.all(np.diff(sorted_out) >= -1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.integers(-1000, 1000), min_size=2, max_size=10, unique=True))
    def test_invariant_to_increasing_transform(self, values):
        v = np.asarray(values, dtype=float) / 10.0
        assert np.allclose(rank_transform(v), rank_transform(np.exp(v / 200.0)))


class TestBuildDesign:
    def make_table(self, tmp_path):
        return load_panel(write_csv(tmp_path, (
            "asset_id,period,return,size,mom\n"
            "a,1,0.1,3.0,0.3\n"
            "a,2,0.2,1.0,0.1\n"
            "b,1,0.3,2.0,0.2\n"
            "b,2,0.4,2.0,0.4\n"
            "c,1,0.5,1.0,0.1\n"
            "c,2,0.6,3.0,0.2\n")))

    def test_intercept_only(self, tmp_path):
        panel = build_design(self.make_table(tmp_path), DesignSpec())
        assert panel.n_covariates == 1
        assert np.all(panel.x[panel.mask] == 1.0)

    def test_raw_column_count(self, tmp_path):
        spec = DesignSpec(raw_columns=("size",))
        assert build_design(self.make_table(tmp_path), spec).n_covariates == 2

    def test_rank_transformed_column(self, tmp_path):
        spec = DesignSpec(raw_columns=("size",), rank_transform=True)
        panel = build_design(self.make_table(tmp_path), spec)
        # period 1 sizes (3, 2, 1) -> (0.5, 0, -0.5)
        assert np.allclose(panel.x[:, 0, 1], [0.5, 0.0, -0.5])

    def test_spline_hat_values(self, tmp_path):
        spec = DesignSpec(spline_columns=("size",))
        panel = build_design(self.make_table(tmp_path), spec)
        assert panel.n_covariates == 3
        # period 1 ranks: a=0.5, b=0, c=-0.5
        assert np.allclose(panel.x[0, 0], [1.0, 0.0, 1.0])   # z = +0.5
        assert np.allclose(panel.x[1, 0], [1.0, 1.0, 0.0])   # z = 0
        assert np.allclose(panel.x[2, 0], [1.0, 0.0, 0.0])   # z = -0.5

    def test_spline_piecewise_linear_oracle(self):
        from nnfactor.panel_io import _spline_basis
        z = np.linspace(-0.5, 0.5, 21)
        mid, hi = _spline_basis(z)

        def hat(zz, lo, center, up):
            if lo <= zz <= center:
                return (zz - lo) / (center - lo) if center > lo else 1.0
            if center < zz <= up:
                return (up - zz) / (up - center)
            return 0.0

        for j, zz in enumerate(z):
            assert mid[j] == pytest.approx(hat(zz, -0.5, 0.0, 0.5), abs=1e-12)
            assert hi[j] == pytest.approx(max(0.0, 2 * zz), abs=1e-12)

    def test_unknown_column(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown column"):
            build_design(self.make_table(tmp_path), DesignSpec(raw_columns=("nope",)))

    def test_empty_design_rejected(self):
        with pytest.raises(ConfigError):
            DesignSpec(intercept=False)

    def test_column_order_documented(self, tmp_path):
        spec = DesignSpec(raw_columns=("size", "mom"), spline_columns=())
        assert spec.column_names() == ["intercept", "size", "mom"]
        spec2 = DesignSpec(raw_columns=("size",), spline_columns=("mom",))
        assert spec2.column_names() == ["intercept", "size",
                                        "mom:spline_mid", "mom:spline_hi"]


class TestEstimateArchive:
    def random_estimate(self, seed, family=UNCONSTRAINED, k=2):
        rng = np.random.default_rng(seed)
        n, p, t = 3, 2, 5
        if family.kind.value == "semiparametric":
            return FactorEstimate(
                family=family, n_assets=n, k_hat=k, delta_used=1.25,
                f_hat=rng.standard_normal((t, k)),
                mu_hat=rng.standard_normal(n),
                phi_hat=rng.standard_normal(p - 1),
                lambda_hat=rng.standard_normal((n, k)),
                phi_mat_hat=rng.standard_normal((p - 1, k)))
        return FactorEstimate(
            family=family, n_assets=n, k_hat=k, delta_used=1.25,
            f_hat=rng.standard_normal((t, k)),
            a_hat=rng.standard_normal(n * p),
            b_hat=rng.standard_normal((n * p, k)))

    @pytest.mark.parametrize("family", [UNCONSTRAINED, SEMIPARAMETRIC])
    def test_round_trip_bitwise(self, tmp_path, family):
        est = self.random_estimate(0, family)
        save_estimate(est, tmp_path / "arch",
                      lambda_used=3.5,
                      solver_report=SolverReport(iterations=12, converged=True,
                                                 final_subgradient_ratio=1e-6))
        back = load_estimate(tmp_path / "arch")
        assert back.family == est.family
        assert back.k_hat == est.k_hat
        assert back.delta_used == est.delta_used
        for name in ("a_hat", "b_hat", "f_hat", "mu_hat", "phi_hat",
                     "lambda_hat", "phi_mat_hat"):
            a, b = getattr(est, name), getattr(back, name)
            if a is None:
                assert b is None
            else:
                assert np.array_equal(a, b)

    def test_k0_round_trip(self, tmp_path):
        est = FactorEstimate(family=UNCONSTRAINED, n_assets=3, k_hat=0,
                             delta_used=2.0, f_hat=np.zeros((5, 0)),
                             a_hat=np.arange(6.0), b_hat=np.zeros((6, 0)))
        save_estimate(est, tmp_path / "arch")
        back = load_estimate(tmp_path / "arch")
        assert back.k_hat == 0
        assert back.b_hat.shape == (6, 0)
        assert back.f_hat.shape == (5, 0)
        assert np.array_equal(back.a_hat, est.a_hat)

    def test_truncated_payload_rejected(self, tmp_path):
        est = self.random_estimate(1)
        save_estimate(est, tmp_path / "arch")
        target = tmp_path / "arch" / "b_hat.csv"
        lines = target.read_text().splitlines()
        target.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(FormatError, match="truncated|ragged"):
            load_estimate(tmp_path / "arch")

    def test_version_mismatch(self, tmp_path):
        est = self.random_estimate(2)
        save_estimate(est, tmp_path / "arch")
        meta = tmp_path / "arch" / "metadata.txt"
        text = meta.read_text().replace("format_version=1", "format_version=99")
        meta.write_text(text)
        with pytest.raises(FormatError, match="version"):
            load_estimate(tmp_path / "arch")

    def test_missing_matrix_file(self, tmp_path):
        est = self.random_estimate(3)
        save_estimate(est, tmp_path / "arch")
        (tmp_path / "arch" / "f_hat.csv").unlink()
        with pytest.raises(FormatError, match="missing matrix"):
            load_estimate(tmp_path / "arch")

    def test_not_an_archive(self, tmp_path):
        with pytest.raises(FormatError):
            load_estimate(tmp_path)
