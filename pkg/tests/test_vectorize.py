import numpy as np
import pytest

from geoattrib.geom import Point, Polygon, polygon_area
from geoattrib.vectorize import (BinaryMask, MaskFileSegmenter, SegConfusion,
                                 TileGrid, load_mask, mask_to_polygons,
                                 rasterize_polygons, repair_seams, save_mask,
                                 seg_confusion, seg_metrics, tile_extent)


class TestTileExtent:
    def test_exact_division(self):
        g = tile_extent((0, 0, 1000, 1000), 500, 1.0)
        assert (g.rows, g.cols) == (2, 2)

    def test_ceiling_rule(self):
        g = tile_extent((0, 0, 1001, 1000), 500, 1.0)
        assert (g.rows, g.cols) == (2, 3)

    def test_tiles_cover_extent_disjoint_interiors(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            w, h = rng.uniform(10, 3000, size=2)
            g = tile_extent((0, 0, w, h), 500, 1.0)
            assert g.cols * g.tile_size_m >= w
            assert g.rows * g.tile_size_m >= h
            # shared edges exactly: adjacent bounds line up
            for r in range(g.rows):
                for c in range(g.cols - 1):
                    assert g.tile_bounds(r, c)[2] == g.tile_bounds(r, c + 1)[0]

    def test_empty_extent_rejected(self):
        with pytest.raises(ValueError):
            tile_extent((0, 0, 0, 10), 500, 1.0)


class TestMaskToPolygons:
    def test_full_tile(self):
        m = BinaryMask(np.ones((10, 10), dtype=np.uint8), 0, 0, 1.0)
        polys = mask_to_polygons(m, simplify_tolerance=0)
        assert len(polys) == 1
        assert polygon_area(polys[0]) == pytest.approx(100.0)

    def test_single_pixel(self):
        g = np.zeros((5, 5), dtype=np.uint8)
        g[2, 3] = 1
        polys = mask_to_polygons(BinaryMask(g, 0, 0, 1.0), 0)
        assert len(polys) == 1
        assert polygon_area(polys[0]) == pytest.approx(1.0)

    def test_diagonal_pixels_are_two_polygons(self):
        g = np.zeros((4, 4), dtype=np.uint8)
        g[1, 1] = 1
        g[2, 2] = 1
        polys = mask_to_polygons(BinaryMask(g, 0, 0, 1.0), 0)
        assert len(polys) == 2

    def test_component_count_matches_labeling_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            g = (rng.random((32, 32)) < 0.4).astype(np.uint8)
            polys = mask_to_polygons(BinaryMask(g, 0, 0, 1.0), 0)
            # naive flood-fill labeling oracle (4-connectivity)
            seen = np.zeros_like(g, dtype=bool)
            comps = 0
            for r in range(32):
                for c in range(32):
                    if g[r, c] and not seen[r, c]:
                        comps += 1
                        stack = [(r, c)]
                        seen[r, c] = True
                        while stack:
                            rr, cc = stack.pop()
                            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                                nr, nc = rr + dr, cc + dc
                                if 0 <= nr < 32 and 0 <= nc < 32 and g[nr, nc] and not seen[nr, nc]:
                                    seen[nr, nc] = True
                                    stack.append((nr, nc))
            assert len(polys) == comps

    def test_area_law(self):
        rng = np.random.default_rng(2)
        g = (rng.random((40, 40)) < 0.5).astype(np.uint8)
        polys = mask_to_polygons(BinaryMask(g, 0, 0, 2.0), 0)
        total = sum(polygon_area(p) for p in polys)
        assert total == pytest.approx(float(g.sum()) * 4.0, abs=1e-9)

    def test_holes_preserved(self):
        g = np.ones((5, 5), dtype=np.uint8)
        g[2, 2] = 0
        polys = mask_to_polygons(BinaryMask(g, 0, 0, 1.0), 0)
        assert len(polys) == 1
        assert len(polys[0].holes) == 1
        assert polygon_area(polys[0]) == pytest.approx(24.0)

    def test_raster_round_trip_bit_exact(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            g = (rng.random((64, 64)) < 0.45).astype(np.uint8)
            polys = mask_to_polygons(BinaryMask(g, 0, 0, 1.0), 0)
            back = rasterize_polygons(polys, 0, 0, 1.0, 64, 64)
            assert np.array_equal(back.grid, g)


class TestSeamRepair:
    GRID = TileGrid(Point(0, 0), 500, 1.0, 1, 2)

    def test_split_rectangle_merges(self):
        left = Polygon([(495, 0), (500, 0), (500, 4), (495, 4)])
        right = Polygon([(500, 0), (505, 0), (505, 4), (500, 4)])
        out = repair_seams([left, right], self.GRID)
        assert len(out) == 1
        assert polygon_area(out[0]) == pytest.approx(40.0, rel=1e-6)

    def test_distant_polygons_untouched(self):
        a = Polygon([(400, 0), (410, 0), (410, 4), (400, 4)])
        b = Polygon([(560, 0), (570, 0), (570, 4), (560, 4)])
        out = repair_seams([a, b], self.GRID)
        assert len(out) == 2

    def test_low_edge_overlap_not_merged(self):
        # abutting but only 10% of the shorter edge overlaps
        a = Polygon([(495, 0), (500, 0), (500, 10), (495, 10)])
        b = Polygon([(500, 9), (505, 9), (505, 19), (500, 19)])
        out = repair_seams([a, b], self.GRID, edge_similarity=0.5)
        assert len(out) == 2

    def test_idempotent(self):
        left = Polygon([(495, 0), (500, 0), (500, 4), (495, 4)])
        right = Polygon([(500, 0), (505, 0), (505, 4), (500, 4)])
        far = Polygon([(100, 100), (110, 100), (110, 110), (100, 110)])
        once = repair_seams([left, right, far], self.GRID)
        twice = repair_seams(once, self.GRID)
        assert len(once) == len(twice) == 2
        assert sum(polygon_area(p) for p in once) == pytest.approx(
            sum(polygon_area(p) for p in twice), rel=1e-12)

    def test_bad_params_rejected(self):
        with pytest.raises(ValueError):
            repair_seams([], self.GRID, seam_buffer=0.0)
        with pytest.raises(ValueError):
            repair_seams([], self.GRID, edge_similarity=1.5)


class TestSegMetrics:
    def test_identity_prediction(self):
        g = (np.random.default_rng(4).random((16, 16)) < 0.5).astype(np.uint8)
        m = BinaryMask(g, 0, 0, 1.0)
        c = seg_confusion(m, m)
        assert c.fp == 0 and c.fn == 0
        sm = seg_metrics(c)
        assert (sm.precision, sm.recall, sm.f1, sm.accuracy, sm.miou) == (1, 1, 1, 1, 1)

    def test_inverted_prediction(self):
        g = (np.random.default_rng(5).random((16, 16)) < 0.5).astype(np.uint8)
        c = seg_confusion(BinaryMask(1 - g, 0, 0, 1.0), BinaryMask(g, 0, 0, 1.0))
        assert c.tp == 0 and c.tn == 0

    def test_counts_match_double_loop(self):
        rng = np.random.default_rng(6)
        p = (rng.random((32, 32)) < 0.5).astype(np.uint8)
        t = (rng.random((32, 32)) < 0.5).astype(np.uint8)
        c = seg_confusion(BinaryMask(p, 0, 0, 1.0), BinaryMask(t, 0, 0, 1.0))
        tp = fp = fn = tn = 0
        for r in range(32):
            for cc in range(32):
                if p[r, cc] and t[r, cc]:
                    tp += 1
                elif p[r, cc]:
                    fp += 1
                elif t[r, cc]:
                    fn += 1
                else:
                    tn += 1
        assert (c.tp, c.fp, c.fn, c.tn) == (tp, fp, fn, tn)

    def test_hand_evaluated_metrics(self):
        sm = seg_metrics(SegConfusion(8, 2, 2, 88))
        assert sm.precision == pytest.approx(0.8)
        assert sm.recall == pytest.approx(0.8)
        assert sm.f1 == pytest.approx(0.8)
        assert sm.accuracy == pytest.approx(0.96)
        assert sm.iou_building == pytest.approx(8 / 12)
        assert sm.iou_background == pytest.approx(88 / 92)
        assert sm.miou == pytest.approx((8 / 12 + 88 / 92) / 2)

    def test_f1_harmonic_mean_property(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            tp, fp, fn, tn = [int(v) for v in rng.integers(0, 50, size=4)]
            sm = seg_metrics(SegConfusion(tp, fp, fn, tn))
            if sm.precision > 0 and sm.recall > 0:
                hm = 2 * sm.precision * sm.recall / (sm.precision + sm.recall)
                assert sm.f1 == pytest.approx(hm, abs=1e-12)
            assert sm.miou == pytest.approx((sm.iou_building + sm.iou_background) / 2, abs=1e-15)

    def test_zero_denominator_flagged(self):
        sm = seg_metrics(SegConfusion(0, 0, 0, 10))
        assert sm.precision == 0.0
        assert "precision" in sm.zero_denominator_flags

    def test_dimension_mismatch(self):
        a = BinaryMask(np.zeros((4, 4), dtype=np.uint8), 0, 0, 1.0)
        b = BinaryMask(np.zeros((4, 5), dtype=np.uint8), 0, 0, 1.0)
        with pytest.raises(ValueError):
            seg_confusion(a, b)


class TestMaskIO:
    def test_ascii_grid_round_trip(self, tmp_path):
        rng = np.random.default_rng(8)
        g = (rng.random((20, 30)) < 0.5).astype(np.uint8)
        m = BinaryMask(g, 12.5, -3.25, 0.5)
        path = tmp_path / "m.asc"
        save_mask(path, m)
        back = load_mask(path)
        assert np.array_equal(back.grid, g)
        assert (back.xll, back.yll, back.cellsize) == (12.5, -3.25, 0.5)

    def test_segmenter_reads_tiles(self, tmp_path):
        g = np.zeros((8, 8), dtype=np.uint8)
        g[2:5, 3:6] = 1
        save_mask(tmp_path / "tile_0_1.asc", BinaryMask(g, 0, 0, 1.0))
        seg = MaskFileSegmenter(tmp_path)
        out = seg.run(0, 1)
        assert np.array_equal(out.grid, g)
