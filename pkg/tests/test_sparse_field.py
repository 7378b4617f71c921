import numpy as np
import pytest

from memfield.errors import ConfigError, NumericalBlowup
from memfield.field_engine import (
    DenseField,
    FieldParams,
    ImportanceMask,
    evolve_mask,
    evolve_step,
)
from memfield.sparse_field import (
    SparseField,
    SparseMask,
    prune,
    sparse_evolve_mask,
    sparse_evolve_step,
    update_codes,
)


def params(n=16, **kw):
    kw.setdefault("grid_size", n)
    kw.setdefault("diffusion", 0.1)
    kw.setdefault("decay", 0.02)
    kw.setdefault("dt", 0.5)
    return FieldParams(**kw)


class TestSparseField:
    def test_roundtrip_dense(self):
        rng = np.random.default_rng(3)
        d = DenseField(rng.standard_normal((12, 12)), time=4.0)
        s = SparseField.from_dense(d)
        assert s.active_count == 144
        assert s.time == 4.0
        back = s.to_dense()
        assert np.array_equal(back.values, d.values)
        assert back.time == 4.0

    def test_set_get_drop_zero(self):
        s = SparseField(grid_size=8)
        s.set((2, 3), 1.5)
        assert s.get((2, 3)) == 1.5
        assert s.get((0, 0)) == 0.0
        s.set((2, 3), 0.0)
        assert s.active_count == 0

    def test_out_of_range_rejected(self):
        with pytest.raises(ConfigError):
            SparseField({(8, 0): 1.0}, grid_size=8)
        s = SparseField(grid_size=8)
        with pytest.raises(ConfigError):
            s.set((-1, 0), 1.0)

    def test_mass(self):
        s = SparseField({(0, 0): 1.25, (3, 3): -0.25}, grid_size=8)
        assert s.mass() == pytest.approx(1.0)

    def test_copy_is_independent(self):
        s = SparseField({(1, 1): 2.0}, grid_size=8)
        c = s.copy()
        c.set((1, 1), 7.0)
        assert s.get((1, 1)) == 2.0


class TestUpdateCodes:
    def test_interior_cell_has_5(self):
        s = SparseField({(4, 4): 1.0}, grid_size=9)
        assert len(update_codes(s)) == 5

    def test_corner_cell_has_3(self):
        s = SparseField({(0, 0): 1.0}, grid_size=9)
        assert len(update_codes(s)) == 3

    def test_empty(self):
        assert len(update_codes(SparseField(grid_size=9))) == 0


class TestParityWithDense:
    def check(self, dense, dmask, p, steps):
        sparse = SparseField.from_dense(dense)
        smask = SparseMask.from_dense(dmask)
        for _ in range(steps):
            dense = evolve_step(dense, dmask, p)
            sparse = sparse_evolve_step(sparse, smask, p)
        assert sparse.time == dense.time
        assert np.array_equal(sparse.to_dense().values, dense.values)

    def test_full_random_field(self):
        rng = np.random.default_rng(11)
        n = 16
        dense = DenseField(rng.standard_normal((n, n)))
        dmask = ImportanceMask(rng.uniform(0.0, 2.0, (n, n)))
        self.check(dense, dmask, params(n, alpha=2.0), steps=60)

    def test_center_impulse(self):
        n = 21
        v = np.zeros((n, n))
        v[10, 10] = 3.0
        dmask = ImportanceMask.uniform(n)
        self.check(DenseField(v), dmask, params(n), steps=40)

    def test_corner_impulse_mirror_edges(self):
        n = 12
        v = np.zeros((n, n))
        v[0, 0] = 1.0
        v[n - 1, n - 1] = -2.0
        self.check(DenseField(v), ImportanceMask.uniform(n), params(n), steps=40)

    def test_patchy_mask(self):
        n = 16
        rng = np.random.default_rng(5)
        v = np.zeros((n, n))
        v[4:8, 4:8] = rng.standard_normal((4, 4))
        mv = np.zeros((n, n))
        mv[5:10, 5:10] = 1.5
        self.check(DenseField(v), ImportanceMask(mv), params(n, alpha=3.0), steps=50)


class TestSparseEvolve:
    def test_empty_field_stays_empty(self):
        p = params()
        s = SparseField(grid_size=16)
        s2 = sparse_evolve_step(s, SparseMask(), p)
        assert s2.active_count == 0
        assert s2.time == pytest.approx(p.dt)

    def test_impulse_spreads_to_halo(self):
        p = params(decay=0.0)
        s = SparseField({(8, 8): 1.0}, grid_size=16)
        s = sparse_evolve_step(s, SparseMask(), p)
        assert s.active_count == 5

    def test_mass_conserved(self):
        p = params(decay=0.0, diffusion=0.2)
        s = SparseField({(8, 8): 2.0, (2, 12): -0.5}, grid_size=16)
        for _ in range(100):
            s = sparse_evolve_step(s, SparseMask(), p)
        assert s.mass() == pytest.approx(1.5, rel=1e-12)

    def test_blowup(self):
        p = params(diffusion=10.0, decay=0.0, dt=0.09, check_stability=False)
        cells = {(r, c): ((r + c) % 2 * 2.0 - 1.0) for r in range(16) for c in range(16)}
        s = SparseField(cells, grid_size=16)
        with pytest.raises(NumericalBlowup):
            for _ in range(3000):
                s = sparse_evolve_step(s, SparseMask(), p)


class TestSparseMask:
    def test_floor_default(self):
        m = SparseMask(floor=0.3)
        assert m.value_at((5, 5)) == 0.3

    def test_floor_cells_dropped(self):
        m = SparseMask({(0, 0): 0.3, (1, 1): 0.9}, floor=0.3)
        assert (0, 0) not in m.cells
        assert m.value_at((0, 0)) == 0.3

    def test_below_floor_rejected(self):
        with pytest.raises(ConfigError):
            SparseMask({(0, 0): 0.1}, floor=0.3)

    def test_raise_to_keeps_max(self):
        m = SparseMask()
        m.raise_to((2, 2), 1.0)
        m.raise_to((2, 2), 0.4)
        assert m.value_at((2, 2)) == 1.0

    def test_decay_parity_with_dense(self):
        n = 10
        rng = np.random.default_rng(9)
        mv = rng.uniform(0.5, 2.0, (n, n))
        dmask = ImportanceMask(mv.copy(), floor=0.5)
        smask = SparseMask.from_dense(dmask)
        p = params(n, beta=0.05, gamma=0.5)
        events = [((3, 3), 1.0), ((7, 2), 2.5)]
        for _ in range(30):
            dmask = evolve_mask(dmask, p, access_events=events)
            smask = sparse_evolve_mask(smask, p, access_events=events)
        assert np.array_equal(smask.to_dense(n).values, dmask.values)

    def test_boost_clamped(self):
        p = params(gamma=1.0, i_cap=1.0)
        m = SparseMask()
        for _ in range(50):
            m = sparse_evolve_mask(m, p, access_events=[((0, 0), 1.0)])
        assert m.value_at((0, 0)) == p.importance_max


class TestPrune:
    def test_removes_small_and_coprunes_mask(self):
        f = SparseField({(0, 0): 1e-8, (1, 1): 0.5, (2, 2): -1e-9}, grid_size=8)
        m = SparseMask({(0, 0): 1.0, (1, 1): 2.0})
        f2, m2, removed = prune(f, m, eps=1e-6)
        assert removed == 2
        assert set(f2.cells) == {(1, 1)}
        assert set(m2.cells) == {(1, 1)}
        assert m2.value_at((0, 0)) == 0.0

    def test_threshold_is_magnitude(self):
        f = SparseField({(0, 0): -0.5}, grid_size=8)
        f2, _, removed = prune(f, SparseMask(), eps=1e-6)
        assert removed == 0
        assert f2.get((0, 0)) == -0.5

    def test_preserves_time(self):
        f = SparseField({(0, 0): 1.0}, grid_size=8, time=9.5)
        f2, _, _ = prune(f, SparseMask(), eps=1e-6)
        assert f2.time == 9.5
