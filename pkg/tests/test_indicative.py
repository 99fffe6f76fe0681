import math

import numpy as np
import pytest

from geoattrib.geom import Point, Polygon
from geoattrib.indicative import (AFTER_LAST_YEAR, AGE_BINS, AoiPlot, FunctionLabel,
                                  ImperviousStack, QualityMode, SviObservation,
                                  age_bin, assign_age, assign_function_labels,
                                  load_svi_csv, quality_Q, quality_T,
                                  quality_latest, reclassify_aoi, save_svi_csv)


def square(x0, y0, side):
    return Polygon([(x0, y0), (x0 + side, y0), (x0 + side, y0 + side), (x0, y0 + side)])


class TestReclass:
    # the fixed plot-to-function mapping rows
    CASES = [
        (("Real Estate", "Residential Areas"), FunctionLabel.Residential),
        (("Real Estate", "Dormitories"), FunctionLabel.Residential),
        (("Shopping", "Shopping Centers"), FunctionLabel.Commercial),
        (("Shopping", "Markets"), FunctionLabel.Commercial),
        (("Shopping", "Supermarkets"), FunctionLabel.Commercial),
        (("Education and Training", "Universities"), FunctionLabel.PublicService),
        (("Healthcare", "General Hospitals"), FunctionLabel.PublicService),
        (("Sports and Fitness", "Sports Venues"), FunctionLabel.PublicService),
        (("Transportation Infrastructure", "Railway Stations"), FunctionLabel.PublicService),
        (("Corporations and Enterprises", "Factories and Mines"), FunctionLabel.Industry),
        (("Real Estate", "Office Buildings"), FunctionLabel.Office),
        (("Government Institutions", "Government Agencies at All Levels"), FunctionLabel.Office),
    ]

    @pytest.mark.parametrize("args,expected", CASES)
    def test_mapping_rows(self, args, expected):
        assert reclassify_aoi(*args) is expected

    def test_unmapped_plots_stay_none(self):
        assert reclassify_aoi("Restaurants", "Cafés") is None
        assert reclassify_aoi("Natural Features", "Islands") is None
        assert reclassify_aoi("Real Estate", "Internal Building Units") is None

    def test_exactly_five_functions(self):
        assert len(FunctionLabel) == 5


class TestAssignFunction:
    def test_containing_plot_labels(self):
        plot = AoiPlot(square(0, 0, 100), "Real Estate", "Residential Areas")
        out = assign_function_labels([("b", square(40, 40, 10))], [plot])
        assert out["b"] is FunctionLabel.Residential

    def test_outside_all_plots_unlabeled(self):
        plot = AoiPlot(square(0, 0, 10), "Shopping", "Markets")
        out = assign_function_labels([("b", square(500, 500, 10))], [plot])
        assert out["b"] is None

    def test_nested_plots_smallest_wins(self):
        outer = AoiPlot(square(0, 0, 100), "Shopping", "Shopping Centers")
        inner = AoiPlot(square(40, 40, 20), "Real Estate", "Office Buildings")
        out = assign_function_labels([("b", square(48, 48, 4))], [outer, inner])
        assert out["b"] is FunctionLabel.Office

    def test_unreclassified_plots_never_label(self):
        plot = AoiPlot(square(0, 0, 100), "Restaurants", "Bars")
        out = assign_function_labels([("b", square(40, 40, 10))], [plot])
        assert out["b"] is None

    def test_total_and_deterministic(self):
        plots = [AoiPlot(square(0, 0, 50), "Shopping", "Markets"),
                 AoiPlot(square(50, 0, 50), "Real Estate", "Residential Areas")]
        buildings = [(i, square(10 + 45 * i, 10, 5)) for i in range(2)]
        a = assign_function_labels(buildings, plots)
        b = assign_function_labels(buildings, plots)
        assert a == b
        assert set(a) == {0, 1}


BLD = square(0, 0, 10)  # centroid (5, 5)


def obs(pid, x, y, images):
    return SviObservation(pid, Point(x, y), 0.0, images)


class TestQuality:
    def test_hand_example(self):
        # M=2: point 1 image flags {1,0} (mean 0.5), point 2 {1} (mean 1.0)
        o1 = obs("p1", 20, 5, {2020: [(1, 0, 0, 0, 0, 0), (0, 0, 0, 0, 0, 0)]})
        o2 = obs("p2", 5, 20, {2020: [(1, 0, 0, 0, 0, 0)]})
        mode, t = quality_T(BLD, [o1, o2], 2020, 0)
        assert mode is QualityMode.SCORE
        assert t == pytest.approx(1.5)
        q = quality_Q(BLD, [o1, o2], 2020)
        assert q.types[0].value == pytest.approx(0.75)
        assert q.total == pytest.approx(0.75)

    def test_no_observation_points(self):
        mode, t = quality_T(BLD, [], 2020, 0)
        assert mode is QualityMode.NO_OBSERVATION_POINTS and t is None
        q = quality_Q(BLD, [obs("p", 5000, 5000, {2020: [(1,) * 6]})], 2020)
        assert q.types[0].mode is QualityMode.NO_OBSERVATION_POINTS

    def test_no_images_that_year(self):
        o = obs("p", 20, 5, {2019: [(0,) * 6]})
        mode, t = quality_T(BLD, [o], 2021, 0)
        assert mode is QualityMode.NO_IMAGES_THAT_YEAR and t is None

    def test_all_zero_flags(self):
        o = obs("p", 20, 5, {2020: [(0,) * 6, (0,) * 6]})
        mode, t = quality_T(BLD, [o], 2020, 0)
        assert mode is QualityMode.SCORE and t == 0.0
        assert quality_Q(BLD, [o], 2020).total == 0.0

    def test_all_flags_set_gives_q6(self):
        o = obs("p", 20, 5, {2020: [(1,) * 6]})
        q = quality_Q(BLD, [o], 2020)
        assert q.total == pytest.approx(6.0)

    def test_q_bounds_random(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            observations = []
            for m in range(int(rng.integers(1, 5))):
                images = {}
                for year in rng.choice(np.arange(2014, 2024),
                                       size=int(rng.integers(1, 3)), replace=False):
                    images[int(year)] = [tuple(int(v) for v in rng.integers(0, 2, size=6))
                                         for _ in range(int(rng.integers(1, 4)))]
                observations.append(obs(f"p{m}", float(rng.uniform(0, 40)),
                                        float(rng.uniform(0, 40)), images))
            years = sorted({y for o in observations for y in o.images})
            q = quality_Q(BLD, observations, years[0])
            if q.total is not None:
                assert 0.0 <= q.total <= 6.0
                for ts in q.types:
                    assert 0.0 <= ts.value <= 1.0

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            observations = []
            for m in range(int(rng.integers(1, 6))):
                images = {}
                for year in rng.choice(np.arange(2014, 2024),
                                       size=int(rng.integers(0, 3)), replace=False):
                    images[int(year)] = [tuple(int(v) for v in rng.integers(0, 2, size=6))
                                         for _ in range(int(rng.integers(1, 5)))]
                observations.append(obs(f"p{m}", float(rng.uniform(0, 120)),
                                        float(rng.uniform(0, 120)), images))
            year = 2018
            # oracle: direct loop over in-buffer points and their images
            in_buf = [o for o in observations
                      if math.hypot(o.point.x - 5, o.point.y - 5) <= 100.0]
            with_imgs = [o for o in in_buf if o.images.get(year)]
            for k in range(6):
                mode, t = quality_T(BLD, observations, year, k)
                if not in_buf:
                    assert mode is QualityMode.NO_OBSERVATION_POINTS
                elif not with_imgs:
                    assert mode is QualityMode.NO_IMAGES_THAT_YEAR
                else:
                    want = sum(sum(fl[k] for fl in o.images[year]) / len(o.images[year])
                               for o in with_imgs)
                    assert t == pytest.approx(want, abs=1e-12)

    def test_monotone_in_added_flags(self):
        o = obs("p", 20, 5, {2020: [(1, 0, 0, 0, 0, 0)]})
        _, t0 = quality_T(BLD, [o], 2020, 0)
        o_plus1 = obs("p", 20, 5, {2020: [(1, 0, 0, 0, 0, 0), (1, 0, 0, 0, 0, 0)]})
        _, t1 = quality_T(BLD, [o_plus1], 2020, 0)
        assert t1 >= t0
        o_plus0 = obs("p", 20, 5, {2020: [(1, 0, 0, 0, 0, 0), (0, 0, 0, 0, 0, 0)]})
        _, t2 = quality_T(BLD, [o_plus0], 2020, 0)
        assert t2 <= t0

    def test_latest_year_selection(self):
        o = obs("p", 20, 5, {2016: [(1, 0, 0, 0, 0, 0)], 2021: [(0,) * 6]})
        assert quality_latest(BLD, [o]).year == 2021
        o2 = obs("p", 20, 5, {2015: [(1, 0, 0, 0, 0, 0)]})
        assert quality_latest(BLD, [o2]).year == 2015
        empty = quality_latest(BLD, [])
        assert empty.types[0].mode is QualityMode.NO_OBSERVATION_POINTS

    def test_year_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            obs("p", 0, 0, {2010: [(0,) * 6]})

    def test_csv_round_trip(self, tmp_path):
        o1 = obs("p1", 12.5, -3.0, {2020: [(1, 0, 1, 0, 0, 0)], 2022: [(0,) * 6]})
        o2 = obs("p2", 7.0, 9.0, {2014: [(1,) * 6, (0,) * 6]})
        path = tmp_path / "svi.csv"
        save_svi_csv(path, [o1, o2])
        back = {o.point_id: o for o in load_svi_csv(path)}
        assert back["p1"].images == o1.images
        assert back["p2"].images == o2.images
        assert back["p1"].point.x == 12.5


class TestAge:
    def _stack(self, setter):
        years = tuple(range(1985, 2019))
        grids = np.zeros((34, 6, 6), dtype=np.uint8)
        setter(grids)
        return ImperviousStack(years, grids, 0.0, 0.0, 10.0)

    def test_first_appearance(self):
        stack = self._stack(lambda g: g.__setitem__((slice(18, None), 1, 1), 1))
        b = square(12, 42, 4)  # centroid (14, 44) -> row 1, col 1
        assert assign_age(b, stack) == 2003

    def test_always_impervious(self):
        stack = self._stack(lambda g: g.__setitem__((slice(None), 0, 0), 1))
        b = square(2, 52, 4)  # centroid (4, 54) -> row 0, col 0
        assert assign_age(b, stack) == 1985

    def test_never_impervious(self):
        stack = self._stack(lambda g: None)
        assert assign_age(square(2, 2, 4), stack) == AFTER_LAST_YEAR

    def test_out_of_extent(self):
        stack = self._stack(lambda g: None)
        assert assign_age(square(1000, 1000, 4), stack) is None

    def test_matches_linear_scan_oracle(self):
        rng = np.random.default_rng(2)
        years = tuple(range(1985, 2019))
        for _ in range(100):
            series = (rng.random(34) < 0.3).astype(np.uint8)
            grids = np.zeros((34, 2, 2), dtype=np.uint8)
            grids[:, 0, 0] = series
            stack = ImperviousStack(years, grids, 0.0, 0.0, 10.0)
            got = assign_age(square(2, 12, 4), stack)  # centroid in cell (0,0)
            want = AFTER_LAST_YEAR
            for i, y in enumerate(years):
                if series[i]:
                    want = y
                    break
            assert got == want

    def test_monotone_under_earlier_imperviousness(self):
        years = tuple(range(1985, 2019))
        grids = np.zeros((34, 2, 2), dtype=np.uint8)
        grids[20:, 0, 0] = 1
        base = assign_age(square(2, 12, 4), ImperviousStack(years, grids, 0, 0, 10.0))
        grids2 = grids.copy()
        grids2[5:, 0, 0] = 1
        earlier = assign_age(square(2, 12, 4), ImperviousStack(years, grids2, 0, 0, 10.0))
        assert earlier <= base

    def test_35_reachable_categories(self):
        years = tuple(range(1985, 2019))
        seen = set()
        for start in range(34):
            grids = np.zeros((34, 1, 1), dtype=np.uint8)
            grids[start:, 0, 0] = 1
            seen.add(assign_age(square(2, 2, 4),
                                ImperviousStack(years, grids, 0, 0, 10.0)))
        grids = np.zeros((34, 1, 1), dtype=np.uint8)
        seen.add(assign_age(square(2, 2, 4), ImperviousStack(years, grids, 0, 0, 10.0)))
        assert len(seen) == 35

    def test_stack_from_directory(self, tmp_path):
        from geoattrib.vectorize import BinaryMask, save_mask

        for year in (1985, 1990, 2000):
            g = np.zeros((3, 3), dtype=np.uint8)
            if year >= 1990:
                g[1, 1] = 1
            save_mask(tmp_path / f"gaia_{year}.asc", BinaryMask(g, 0, 0, 10.0))
        stack = ImperviousStack.from_directory(tmp_path)
        assert stack.years == (1985, 1990, 2000)
        assert assign_age(square(12, 12, 4), stack) == 1990


class TestAgeBin:
    @pytest.mark.parametrize("year,expected", [
        (1985, "<=1985"), (1986, "1986-1990"), (1990, "1986-1990"),
        (1991, "1991-2000"), (2000, "1991-2000"), (2005, "2001-2010"),
        (2010, "2001-2010"), (2011, "2011-2018"), (2018, "2011-2018"),
        (AFTER_LAST_YEAR, AFTER_LAST_YEAR),
    ])
    def test_bins(self, year, expected):
        assert age_bin(year) == expected

    def test_six_bins_total(self):
        assert len(AGE_BINS) == 6
