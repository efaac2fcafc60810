"""Two-component auxiliary-variable engine for split energies.

Used for energies with two disparate nonlinear parts (the vesicle membrane
model ships with such a split).  Each step solves one diagonal system per
component with half the implicit history on each right-hand side, couples
the two auxiliary scalars through their sum in a closed-form 2x2 update,
corrects each component multiplicatively, and (in the relaxed variant)
re-anchors both scalars with a single shared blend factor chosen by the
same four-branch rule as the single-variable scheme applied to the totals.
"""
from __future__ import annotations

import math
import time
from typing import Optional

from .bdf import History, bdf_table, weighted_sum
from .models import ModelSpec
from .schemes import (
    DivergenceError,
    RelaxOutcome,
    SchemeConfig,
    StepTrace,
    eta_correct,
    eta_exponent,
    relax,
)
from .spectral import Field, inner, solve_operator


class SingularUpdateError(RuntimeError):
    pass


def msav_aux_update(r1: float, r2: float, e1_bar: float, e2_bar: float,
                    d1: float, d2: float, dt: float) -> tuple[float, float]:
    """Closed-form solve of the coupled auxiliary update.

    Both equations couple only through the sum s = r1~ + r2~, which obeys the
    single-variable update with the total dissipation inner product d1 + d2.
    """
    e_total = e1_bar + e2_bar
    if e_total <= 0:
        raise ValueError("total shifted energy must be positive")
    scale = 1.0 + dt * (d1 + d2) / e_total
    if scale <= 1e-14:
        raise SingularUpdateError("auxiliary update lost invertibility")
    s = (r1 + r2) / scale
    return r1 - dt * s * d1 / e_total, r2 - dt * s * d2 / e_total


def msav_correct(rt1: float, rt2: float, e1_bar: float, e2_bar: float,
                 phi1: Field, phi2: Field, p: int):
    """Per-component multiplicative correction; returns the corrected field
    and the (ratio, factor) pairs."""
    xi1 = rt1 / e1_bar
    xi2 = rt2 / e2_bar
    eta1 = eta_correct(xi1, p)
    eta2 = eta_correct(xi2, p)
    return eta1 * phi1 + eta2 * phi2, xi1, xi2, eta1, eta2


def msav_relax(rt1: float, rt2: float, e1_new: float, e2_new: float,
               e_bar_total: float, gmu_bar: float, gmu_new: float,
               dt: float, eps_k: float = 1e-14
               ) -> tuple[float, float, RelaxOutcome]:
    """Shared-blend relaxation: the four-branch rule on the totals, then the
    same blend factor applied to both components."""
    out = relax(rt1 + rt2, e1_new + e2_new, e_bar_total, gmu_new, gmu_bar,
                dt, eps_k)
    r1 = out.zeta0 * rt1 + (1.0 - out.zeta0) * e1_new
    r2 = out.zeta0 * rt2 + (1.0 - out.zeta0) * e2_new
    return r1, r2, out


class MsavStepper:
    """Two-variable stepper (msav, r-msav) over a model with an energy split."""

    def __init__(self, model: ModelSpec, config: SchemeConfig,
                 phi0: Optional[Field] = None, t0: float = 0.0):
        if config.variant not in ("msav", "r-msav"):
            raise ValueError(f"variant {config.variant!r} is not a two-variable scheme")
        if model.split is None:
            raise ValueError(f"model {model.name!r} has no energy split")
        self.model = model
        self.split = model.split
        self.config = config
        self.k = config.order
        self.dt = config.dt
        self._phis = History(self.k)
        self._step = 0
        self._r1 = math.nan
        self._r2 = math.nan
        if phi0 is not None:
            self._phis.push(t0, phi0)
            self._r1 = self.split.e1(phi0)
            self._r2 = self.split.e2(phi0)

    @property
    def t(self) -> float:
        return self._phis.latest_time()

    @property
    def phi(self) -> Field:
        return self._phis.latest()

    @property
    def aux(self) -> tuple[float, float]:
        return self._r1, self._r2

    def step(self) -> StepTrace:
        started = time.perf_counter()
        split = self.split
        j = min(self.k, len(self._phis))
        table = bdf_table(j)
        t_new = self.t + self.dt

        newest = self._phis.newest_first(j)
        a_half = weighted_sum(newest, table.a_coeffs) * (0.5 / self.dt)
        b_phi = weighted_sum(newest, table.b_coeffs)
        symbol = self.model.implicit.shifted(table.alpha / self.dt)
        phi1 = solve_operator(a_half - split.g1(b_phi), symbol)
        phi2 = solve_operator(a_half - split.g2(b_phi), symbol)

        phi_bar = phi1 + phi2
        self.last_components = (phi1, phi2)
        de1_bar = split.de1(phi_bar)
        de2_bar = split.de2(phi_bar)
        mu_bar = de1_bar + de2_bar
        g_mu_bar = split.mob_apply(mu_bar)
        d1 = inner(de1_bar, g_mu_bar)
        d2 = inner(de2_bar, g_mu_bar)
        e1_bar = split.e1(phi_bar)
        e2_bar = split.e2(phi_bar)
        rt1, rt2 = msav_aux_update(self._r1, self._r2, e1_bar, e2_bar,
                                   d1, d2, self.dt)

        p = self.config.eta_exponent or eta_exponent(j)
        phi_new, xi1, xi2, eta1, eta2 = msav_correct(
            rt1, rt2, e1_bar, e2_bar, phi1, phi2, p)

        nan = math.nan
        if self.config.variant == "r-msav":
            e1_new = split.e1(phi_new)
            e2_new = split.e2(phi_new)
            mu_new = split.de1(phi_new) + split.de2(phi_new)
            gmu_new = inner(split.mob_apply(mu_new), mu_new)
            gmu_bar_val = inner(g_mu_bar, mu_bar)
            r1, r2, out = msav_relax(rt1, rt2, e1_new, e2_new,
                                     e1_bar + e2_bar, gmu_bar_val, gmu_new,
                                     self.dt, self.config.eps_k)
            zeta0, gamma, case = out.zeta0, out.gamma, out.case
            # total decrease holds in exact arithmetic; absorb ulp rounding
            total_prev = self._r1 + self._r2
            total_new = r1 + r2
            if total_new > total_prev > 0.0:
                scale = total_prev / total_new
                r1 *= scale
                r2 *= scale
        else:
            r1, r2 = rt1, rt2
            zeta0 = gamma = nan
            case = 0

        self._step += 1
        if not phi_new.is_finite():
            raise DivergenceError(self._step, t_new)
        self._phis.push(t_new, phi_new)
        self._r1, self._r2 = r1, r2
        return StepTrace(self._step, t_new, self.model.energy_total(phi_new),
                         r1 + r2, rt1 + rt2, nan, nan, zeta0, gamma,
                         phi_new.mean(), case,
                         wall=time.perf_counter() - started,
                         r1=r1, r2=r2, xi1=xi1, xi2=xi2, eta1=eta1, eta2=eta2)

    def run(self, n_steps: int) -> list[StepTrace]:
        return [self.step() for _ in range(n_steps)]
