import math

import numpy as np
import pytest

from savflows.models import (
    allen_cahn,
    spheres_initial,
    vesicle,
    vesicle_area,
    vesicle_volume,
    with_two_term_split,
)
from savflows.msav import (
    MsavStepper,
    msav_aux_update,
    msav_correct,
    msav_relax,
)
from savflows.schemes import GsavStepper, SchemeConfig, gsav_aux_update, relax
from savflows.spectral import Field, Grid, l2_norm


def split_ac_model(grid, alpha=1e-4, c1=0.5, c2=0.5):
    """Double-well flow with the whole potential in the first component."""
    base = allen_cahn(grid, alpha, c0=c1 + c2)
    zero = lambda v: np.zeros_like(v)
    return base, with_two_term_split(
        base, f1=lambda v: 0.25 * (v * v - 1.0) ** 2,
        f1_prime=lambda v: v * (v * v - 1.0),
        f2=zero, f2_prime=zero, c1=c1, c2=c2)


class TestAuxUpdate:
    def test_zero_dissipation_keeps_values(self):
        rt1, rt2 = msav_aux_update(1.0, 2.0, 1.5, 2.5, 0.0, 0.0, 0.1)
        assert (rt1, rt2) == (1.0, 2.0)

    def test_residual_of_coupled_equations(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            r1, r2 = rng.uniform(0.1, 5, 2)
            e1, e2 = rng.uniform(0.5, 5, 2)
            d1, d2 = rng.uniform(-1.0, 5, 2)
            if d1 + d2 < 0:
                continue
            dt = rng.uniform(1e-3, 1)
            rt1, rt2 = msav_aux_update(r1, r2, e1, e2, d1, d2, dt)
            s = rt1 + rt2
            res1 = (rt1 - r1) / dt + s / (e1 + e2) * d1
            res2 = (rt2 - r2) / dt + s / (e1 + e2) * d2
            scale = max(abs(r1), abs(r2), 1.0) / dt
            assert abs(res1) <= 1e-12 * scale
            assert abs(res2) <= 1e-12 * scale

    def test_sum_matches_single_variable_update(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            r1, r2 = rng.uniform(0.1, 5, 2)
            e1, e2 = rng.uniform(0.5, 5, 2)
            d1, d2 = rng.uniform(0.0, 5, 2)
            dt = rng.uniform(1e-3, 1)
            rt1, rt2 = msav_aux_update(r1, r2, e1, e2, d1, d2, dt)
            single = gsav_aux_update(r1 + r2, e1 + e2, d1 + d2, dt)
            assert rt1 + rt2 == pytest.approx(single, rel=1e-12)


class TestCorrect:
    def test_unit_ratios_keep_intermediate(self):
        grid = Grid((1.0,), (8,))
        phi1 = Field(grid, np.full(grid.shape, 0.3))
        phi2 = Field(grid, np.full(grid.shape, 0.4))
        out, xi1, xi2, eta1, eta2 = msav_correct(2.0, 3.0, 2.0, 3.0,
                                                 phi1, phi2, 3)
        assert (xi1, xi2, eta1, eta2) == (1.0, 1.0, 1.0, 1.0)
        assert np.allclose(out.values, 0.7)

    def test_zero_ratio_annihilates_component(self):
        grid = Grid((1.0,), (8,))
        phi1 = Field(grid, np.full(grid.shape, 0.3))
        phi2 = Field(grid, np.full(grid.shape, 0.4))
        out, _, _, _, eta2 = msav_correct(2.0, 0.0, 2.0, 3.0, phi1, phi2, 3)
        assert eta2 == 0.0
        assert np.allclose(out.values, 0.3)

    def test_matches_single_variable_formula(self):
        from savflows.schemes import eta_correct
        _, _, _, eta1, eta2 = msav_correct(
            1.8, 2.4, 2.0, 3.0,
            Field(Grid((1.0,), (8,)), np.zeros(8)),
            Field(Grid((1.0,), (8,)), np.zeros(8)), 4)
        assert eta1 == eta_correct(0.9, 4)
        assert eta2 == eta_correct(0.8, 4)


class TestRelax:
    def test_anchors_to_components(self):
        r1, r2, out = msav_relax(0.6, 0.9, 0.7, 0.8, 2.0, 1.0, 1.0, 0.1)
        assert out.case == 1  # totals match exactly
        assert out.zeta0 == 0.0
        assert (r1, r2) == (0.7, 0.8)

    def test_delegates_to_single_variable_relax(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            rt1, rt2 = rng.uniform(0.1, 3, 2)
            e1, e2 = rng.uniform(0.5, 3, 2)
            eb = rng.uniform(1.0, 6)
            gb, gn = rng.uniform(1e-3, 5, 2)
            dt = rng.uniform(1e-2, 1)
            r1, r2, out = msav_relax(rt1, rt2, e1, e2, eb, gb, gn, dt)
            single = relax(rt1 + rt2, e1 + e2, eb, gn, gb, dt)
            assert out.zeta0 == single.zeta0
            assert out.gamma == single.gamma
            assert r1 + r2 == pytest.approx(single.r_new, rel=1e-12)

    def test_case_four_totals(self):
        # same numbers as the single-variable hand case, distributed
        r1, r2, out = msav_relax(0.4, 0.6, 0.8, 1.2, 2.0, 10.0, 1.0, 0.1)
        assert out.case == 4
        assert out.zeta0 == pytest.approx(0.5, rel=1e-13)
        assert r1 + r2 == pytest.approx(1.5, rel=1e-13)


class TestStepperConsistency:
    def test_degenerate_split_matches_single_variable(self):
        # second potential zero, second auxiliary frozen at its shift: the
        # trajectory must match the single-variable relaxed scheme
        grid = Grid((1.0, 1.0), (24, 24))
        base, split_model = split_ac_model(grid)
        x, y = grid.coords()
        phi0 = Field(grid, 0.4 * np.cos(2 * np.pi * x) * np.cos(2 * np.pi * y))
        dt = 1e-2
        single = GsavStepper(base, SchemeConfig("r-gsav", 2, dt), phi0)
        double = MsavStepper(split_model, SchemeConfig("r-msav", 2, dt), phi0)
        assert double.aux[1] == split_model.split.c2
        for n in range(100):
            single.step()
            tr = double.step()
            assert tr.r2 == pytest.approx(split_model.split.c2, rel=1e-12)
        diff = l2_norm(single.phi - double.phi)
        assert diff <= 1e-10 * max(l2_norm(single.phi), 1.0)

    def test_symmetric_split_components_agree(self):
        grid = Grid((1.0, 1.0), (16, 16))
        base = allen_cahn(grid, 1e-3, c0=1.0)
        half_well = lambda v: 0.125 * (v * v - 1.0) ** 2
        half_prime = lambda v: 0.5 * v * (v * v - 1.0)
        model = with_two_term_split(base, half_well, half_prime,
                                    half_well, half_prime, c1=0.5, c2=0.5)
        x, y = grid.coords()
        phi0 = Field(grid, 0.3 * np.cos(2 * np.pi * x))
        s = MsavStepper(model, SchemeConfig("r-msav", 1, 1e-2), phi0)
        s.step()
        phi1, phi2 = s.last_components
        assert np.array_equal(phi1.values, phi2.values)


def make_pfvm(n=16):
    eps = 6 * np.pi / 128
    grid = Grid((2 * np.pi,) * 3, (n,) * 3, origin=(-np.pi,) * 3)
    z = 0.35 * np.pi
    phi0 = spheres_initial(grid, [(0, 0, z), (0, 0, -z)],
                           [0.28 * np.pi] * 2, eps)
    provisional = vesicle(grid, eps, 0.01, 0.01, 1.0,
                          alpha_vol=vesicle_volume(phi0),
                          beta_area=vesicle_area(phi0, eps))
    # shift the first component past its initial bending energy
    c1 = 1.0 + max(provisional.split.e1(phi0) - 1.0, 0.0)
    model = vesicle(grid, eps, 0.01, 0.01, 1.0,
                    alpha_vol=vesicle_volume(phi0),
                    beta_area=vesicle_area(phi0, eps), c1=c1)
    return model, phi0


class TestVesicleRun:
    def test_total_dissipation_short_run(self):
        model, phi0 = make_pfvm(n=16)
        s = MsavStepper(model, SchemeConfig("r-msav", 2, 1e-4), phi0)
        prev = sum(s.aux)
        for _ in range(50):
            tr = s.step()
            total = tr.r1 + tr.r2
            assert total <= prev
            e_split = model.split.e1(s.phi) + model.split.e2(s.phi)
            assert total <= e_split * (1 + 1e-12)
            prev = total

    def test_requires_split(self):
        grid = Grid((1.0,), (8,))
        base = allen_cahn(grid, 0.01)
        with pytest.raises(ValueError):
            MsavStepper(base, SchemeConfig("r-msav", 2, 0.1),
                        Field(grid, np.zeros(grid.shape)))
