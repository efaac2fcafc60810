"""Time-integration engines.

Implicit-explicit multistep schemes driven by a scalar auxiliary energy
variable.  Four single-variable flavours are provided:

* ``sav`` / ``r-sav``: the square-root auxiliary formulation for gradient
  flows (orders 1-2), solved by a two-solve decoupling, optionally followed
  by a relaxation that re-anchors the auxiliary scalar to the nonlinear
  energy.
* ``gsav`` / ``r-gsav``: the whole-energy auxiliary formulation for general
  dissipative systems (orders 1-5), one diagonal solve per step plus a
  multiplicative correction; the relaxed variant re-anchors the auxiliary
  energy to the true energy each step via the smallest admissible blend
  factor, preserving unconditional dissipation of the auxiliary energy.
* ``semi-implicit``: the bare predictor accepted as-is (reference scheme).

A scheme state owns two ring buffers: the accepted fields (used by the
implicit history combination) and the intermediate predictor fields (used by
the explicit extrapolation); the square-root schemes use a single stream.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .bdf import BdfTable, History, bdf_table, combine_A, extrapolate_B, weighted_sum
from .models import ModelSpec
from .spectral import (
    DiagonalSymbol,
    Field,
    apply_operator,
    dealias_mask,
    inner,
    integrate,
    solve_operator,
)

GSAV_VARIANTS = ("gsav", "r-gsav", "semi-implicit")
SAV_VARIANTS = ("sav", "r-sav")
MSAV_VARIANTS = ("msav", "r-msav")
ALL_VARIANTS = GSAV_VARIANTS + SAV_VARIANTS + MSAV_VARIANTS


class DivergenceError(RuntimeError):
    """A step produced non-finite field values."""

    def __init__(self, step: int, t: float):
        super().__init__(f"non-finite field values at step {step} (t = {t:g})")
        self.step = step
        self.t = t


@dataclass(frozen=True)
class SchemeConfig:
    variant: str
    order: int
    dt: float
    eta_exponent: Optional[int] = None
    gamma: float = 0.95
    eps_k: float = 1e-14
    dealias: bool = False
    debug_checks: bool = False

    def __post_init__(self):
        if self.variant not in ALL_VARIANTS:
            raise ValueError(f"unknown scheme variant {self.variant!r}")
        kmax = 2 if self.variant in SAV_VARIANTS else 5
        if not 1 <= self.order <= kmax:
            raise ValueError(
                f"order {self.order} out of range 1..{kmax} for {self.variant}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.eta_exponent is not None and self.eta_exponent < 2:
            raise ValueError("eta exponent must be an integer >= 2")


def eta_exponent(k: int) -> int:
    """Default correction exponent: cubic at first order, k+1 above."""
    return 3 if k == 1 else k + 1


def eta_correct(xi: float, p: int) -> float:
    return 1.0 - (1.0 - xi) ** p


@dataclass(frozen=True)
class StepTrace:
    step: int
    t: float
    energy: float
    r: float
    r_tilde: float
    xi: float
    eta: float
    zeta0: float
    gamma: float
    mass: float
    case: int
    wall: float = 0.0
    r1: Optional[float] = None
    r2: Optional[float] = None
    xi1: Optional[float] = None
    xi2: Optional[float] = None
    eta1: Optional[float] = None
    eta2: Optional[float] = None


@dataclass(frozen=True)
class RelaxOutcome:
    zeta0: float
    gamma: float
    r_new: float
    case: int


def gsav_predict(model: ModelSpec, phis: Sequence[Field], phibars: Sequence[Field],
                 table: BdfTable, dt: float, t_next: float,
                 dealias: bool = False) -> Field:
    """One implicit-explicit predictor solve.

    phis / phibars are the newest-first accepted and intermediate histories;
    the implicit combination runs over the accepted stream, the explicit
    extrapolation over the intermediate stream.
    """
    a_phi = weighted_sum(phis, table.a_coeffs)
    b_phi = weighted_sum(phibars, table.b_coeffs)
    g_term = model.explicit(b_phi)
    if dealias:
        mask = dealias_mask(model.grid)
        g_term = apply_operator(g_term, DiagonalSymbol(model.grid, mask.astype(float)))
    rhs = a_phi * (1.0 / dt) - g_term
    if model.forcing is not None:
        rhs = rhs + model.forcing(t_next)
    return solve_operator(rhs, model.implicit.shifted(table.alpha / dt))


def gsav_aux_update(r_prev: float, e_bar: float, k_bar: float, dt: float) -> float:
    """Backward-Euler auxiliary update in closed form.

    For nonnegative decay rates this never increases r; forced runs may pass
    a negative rate (energy pumped in), letting r follow the energy upward.
    """
    if e_bar <= 0:
        raise ValueError("shifted energy must be positive")
    scale = 1.0 + dt * k_bar / e_bar
    if scale <= 1e-14:
        raise ValueError("auxiliary update lost invertibility")
    return r_prev / scale


def relax(r_tilde: float, e_new: float, e_bar: float, k_new: float, k_bar: float,
          dt: float, eps_k: float = 1e-14, signed: bool = False) -> RelaxOutcome:
    """Choose the smallest admissible blend of the auxiliary energy toward the
    true energy that keeps the per-step dissipation inequality.

    Returns the blend factor in [0, 1], the certified dissipation rate
    (>= 0), the updated auxiliary value, and which of the four branches
    fired.  Near-critical states (k_new below eps_k) report a zero rate
    instead of dividing by it; the update itself is unchanged.

    ``signed=True`` admits negative decay rates (forced runs, where energy
    may be pumped in); the rate certificate is then clamped at zero and only
    the re-anchoring behaviour matters.
    """
    if e_new <= 0 or e_bar <= 0:
        raise ValueError("energies must be positive")
    if r_tilde < 0:
        raise ValueError("auxiliary value must be nonnegative")
    if not signed and (k_new < 0 or k_bar < 0):
        raise ValueError("dissipation terms must be nonnegative")

    drive = r_tilde * k_bar / e_bar
    if r_tilde == e_new:
        case = 1
        zeta0 = 0.0
        gamma = drive / k_new if k_new >= eps_k else 0.0
    elif r_tilde > e_new:
        case = 2
        zeta0 = 0.0
        gamma = ((r_tilde - e_new) / (dt * k_new) + drive / k_new
                 if k_new >= eps_k else 0.0)
    elif r_tilde - e_new + dt * drive >= 0.0:
        case = 3
        zeta0 = 0.0
        gamma = ((r_tilde - e_new) / (dt * k_new) + drive / k_new
                 if k_new >= eps_k else 0.0)
    else:
        case = 4
        zeta0 = 1.0 - dt * drive / (e_new - r_tilde)
        zeta0 = min(max(zeta0, 0.0), 1.0)
        gamma = 0.0
    if signed:
        gamma = max(gamma, 0.0)
    r_new = zeta0 * r_tilde + (1.0 - zeta0) * e_new
    return RelaxOutcome(zeta0, gamma, r_new, case)


def relax_membership_gap(outcome: RelaxOutcome, r_tilde: float, e_bar: float,
                         k_new: float, k_bar: float, dt: float) -> float:
    """Signed slack of the admissibility inequality (<= 0 means admissible)."""
    lhs = (outcome.r_new - r_tilde) / dt
    rhs = -outcome.gamma * k_new + (r_tilde / e_bar) * k_bar
    return lhs - rhs


class GsavStepper:
    """Whole-energy auxiliary-variable stepper (gsav, r-gsav, semi-implicit).

    A cold start ramps the multistep order 1 -> k over the first k-1 steps;
    ``seed_exact`` instead fills the history with exact samples (convergence
    studies).  ``light=True`` skips every functional evaluation not needed by
    the scheme itself (useful for semi-implicit reference runs).
    """

    def __init__(self, model: ModelSpec, config: SchemeConfig,
                 phi0: Optional[Field] = None, t0: float = 0.0,
                 light: bool = False):
        if config.variant not in GSAV_VARIANTS:
            raise ValueError(f"variant {config.variant!r} is not a whole-energy scheme")
        self.model = model
        self.config = config
        self.k = config.order
        self.dt = config.dt
        self.light = light
        self._phis = History(self.k)
        self._phibars = History(self.k)
        self._r = math.nan
        self._step = 0
        if phi0 is not None:
            self._phis.push(t0, phi0)
            self._phibars.push(t0, phi0)
            if config.variant != "semi-implicit":
                self._r = model.energy(phi0)

    def seed_exact(self, t0: float = 0.0):
        """Fill the history with exact solution samples at t0 .. t0+(k-1)dt."""
        if self.model.exact is None:
            raise ValueError("model has no exact solution to seed from")
        if len(self._phis):
            raise RuntimeError("stepper already seeded")
        for i in range(self.k):
            ti = t0 + i * self.dt
            sample = self.model.exact(ti)
            self._phis.push(ti, sample)
            self._phibars.push(ti, sample)
        if self.config.variant != "semi-implicit":
            self._r = self.model.energy(self._phis.latest())

    @property
    def t(self) -> float:
        return self._phis.latest_time()

    @property
    def phi(self) -> Field:
        return self._phis.latest()

    @property
    def aux(self) -> float:
        return self._r

    def step(self) -> StepTrace:
        started = time.perf_counter()
        j = min(self.k, len(self._phis))
        table = bdf_table(j)
        t_new = self.t + self.dt
        phi_bar = gsav_predict(self.model, self._phis.newest_first(j),
                               self._phibars.newest_first(j), table, self.dt,
                               t_new, dealias=self.config.dealias)

        variant = self.config.variant
        nan = math.nan
        if variant == "semi-implicit":
            phi_new = phi_bar
            r_new = r_tilde = xi = eta = zeta0 = gamma = nan
            case = 0
        else:
            forced = self.model.forcing is not None
            e_bar = self.model.energy(phi_bar)
            k_bar = self.model.dissipation_at(phi_bar, t_new)
            r_tilde = gsav_aux_update(self._r, e_bar, k_bar, self.dt)
            xi = r_tilde / e_bar
            p = self.config.eta_exponent or eta_exponent(j)
            eta = eta_correct(xi, p)
            phi_new = eta * phi_bar
            if variant == "gsav":
                r_new = r_tilde
                zeta0 = gamma = nan
                case = 0
            else:
                e_new = self.model.energy(phi_new)
                k_new = self.model.dissipation_at(phi_new, t_new)
                out = relax(r_tilde, e_new, e_bar, k_new, k_bar, self.dt,
                            self.config.eps_k, signed=forced)
                if self.config.debug_checks:
                    gap = relax_membership_gap(out, r_tilde, e_bar, k_new,
                                               k_bar, self.dt)
                    if gap > 1e-12:
                        raise AssertionError(f"relaxation left the admissible set "
                                             f"(gap {gap:.3e})")
                r_new, zeta0, gamma, case = out.r_new, out.zeta0, out.gamma, out.case
                if not forced:
                    # the per-step decrease holds in exact arithmetic; absorb
                    # the ulp-level rounding of the re-anchoring branches
                    r_new = min(r_new, self._r)

        self._step += 1
        if not phi_new.is_finite():
            raise DivergenceError(self._step, t_new)
        self._phis.push(t_new, phi_new)
        self._phibars.push(t_new, phi_bar)
        self._r = r_new

        energy = nan if self.light else self.model.energy_total(phi_new)
        return StepTrace(self._step, t_new, energy, r_new, r_tilde, xi, eta,
                         zeta0, gamma, phi_new.mean(), case,
                         wall=time.perf_counter() - started)

    def run(self, n_steps: int) -> list[StepTrace]:
        return [self.step() for _ in range(n_steps)]


@dataclass(frozen=True)
class RsavOutcome:
    zeta0: float
    r_new: float
    skipped: bool = False


def rsav_relax(r_tilde: float, r_prev: float, anchor: float, gmu_mu: float,
               dt: float, gamma: float, k: int) -> RsavOutcome:
    """Relax the square-root auxiliary scalar toward its pointwise value.

    ``anchor`` is the continuous-definition value sqrt(E1 + C0) at the new
    field; the admissible set bounds the growth of the auxiliary energy by
    dt*gamma times the dissipation inner product.  Solved as a quadratic in
    the blend factor; a negative discriminant (never observed for admissible
    inputs since the full blend is always admissible) skips the relaxation.
    """
    d = r_tilde - anchor
    if k == 1:
        a = d * d
        b = 2.0 * anchor * d
        c = anchor ** 2 - r_tilde ** 2 - dt * gamma * gmu_mu
    elif k == 2:
        a = 2.5 * d * d
        b = d * (5.0 * anchor - 2.0 * r_prev)
        c = 0.5 * (anchor ** 2 + (2.0 * anchor - r_prev) ** 2
                   - r_tilde ** 2 - (2.0 * r_tilde - r_prev) ** 2) - dt * gamma * gmu_mu
    else:
        raise ValueError("square-root relaxation is shipped for orders 1 and 2")
    if a < 1e-14:
        # degenerate: r_tilde already equals the anchor, any blend gives it back
        return RsavOutcome(0.0, r_tilde, False)
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return RsavOutcome(1.0, r_tilde, True)
    zeta0 = max(0.0, (-b - math.sqrt(disc)) / (2.0 * a))
    zeta0 = min(zeta0, 1.0)
    return RsavOutcome(zeta0, zeta0 * r_tilde + (1.0 - zeta0) * anchor, False)


class SavStepper:
    """Square-root auxiliary-variable stepper for gradient flows (sav, r-sav).

    Each step solves two decoupled diagonal systems and one scalar linear
    equation; a single accepted history stream feeds both the implicit
    combination and the explicit extrapolation.
    """

    def __init__(self, model: ModelSpec, config: SchemeConfig,
                 phi0: Optional[Field] = None, t0: float = 0.0):
        if config.variant not in SAV_VARIANTS:
            raise ValueError(f"variant {config.variant!r} is not a square-root scheme")
        if model.gradient_flow is None:
            raise ValueError(f"model {model.name!r} lacks a gradient-flow form")
        self.model = model
        self.flow = model.gradient_flow
        self.config = config
        self.k = config.order
        self.dt = config.dt
        self._phis = History(self.k)
        self._rs = History(self.k)
        self._step = 0
        self._last = None
        if phi0 is not None:
            self._phis.push(t0, phi0)
            self._rs.push(t0, math.sqrt(self._e1(phi0) + self.flow.c0))

    def _e1(self, phi: Field) -> float:
        return integrate(Field(phi.grid, self.flow.f(phi.values)))

    def seed_exact(self, t0: float = 0.0):
        if self.model.exact is None:
            raise ValueError("model has no exact solution to seed from")
        if len(self._phis):
            raise RuntimeError("stepper already seeded")
        for i in range(self.k):
            ti = t0 + i * self.dt
            sample = self.model.exact(ti)
            self._phis.push(ti, sample)
            self._rs.push(ti, math.sqrt(self._e1(sample) + self.flow.c0))

    @property
    def t(self) -> float:
        return self._phis.latest_time()

    @property
    def phi(self) -> Field:
        return self._phis.latest()

    @property
    def aux(self) -> float:
        return self._rs.latest()

    def step(self) -> StepTrace:
        started = time.perf_counter()
        model, flow, grid = self.model, self.flow, self.model.grid
        j = min(self.k, len(self._phis))
        table = bdf_table(j)
        t_new = self.t + self.dt

        b_phi = weighted_sum(self._phis.newest_first(j), table.b_coeffs)
        e1_b = self._e1(b_phi)
        shifted = e1_b + flow.c0
        if shifted <= 0:
            raise ValueError("shifted nonlinear energy is not positive")
        denom = math.sqrt(shifted)
        fprime_b = Field(grid, flow.f_prime(b_phi.values))
        b_field = fprime_b * (1.0 / denom)

        symbol = flow.mob.times(flow.lin).shifted(table.alpha / self.dt)
        a_phi = combine_A(self._phis, table) if j == self.k else weighted_sum(
            self._phis.newest_first(j), table.a_coeffs)
        rhs1 = a_phi * (1.0 / self.dt)
        if model.forcing is not None:
            rhs1 = rhs1 + model.forcing(t_new)
        phi_hat1 = solve_operator(rhs1, symbol)
        phi_hat2 = solve_operator(-flow.apply_mob(b_field), symbol)

        coeff = table.alpha * (1.0 - 0.5 * inner(b_field, phi_hat2))
        if not coeff > table.alpha / 2.0:
            raise RuntimeError("scalar solve coefficient lost positivity")
        a_r = weighted_sum(self._rs.newest_first(j), table.a_coeffs)
        r_tilde = (a_r + 0.5 * inner(b_field, table.alpha * phi_hat1 - a_phi)) / coeff
        phi_new = phi_hat1 + r_tilde * phi_hat2

        nan = math.nan
        zeta0 = nan
        if self.config.variant == "r-sav":
            mu_scheme = apply_operator(phi_new, flow.lin) + (r_tilde / denom) * fprime_b
            gmu_mu = inner(flow.apply_mob(mu_scheme), mu_scheme)
            anchor = math.sqrt(self._e1(phi_new) + flow.c0)
            out = rsav_relax(r_tilde, self._rs.latest(), anchor, gmu_mu,
                             self.dt, self.config.gamma, j)
            r_new, zeta0 = out.r_new, out.zeta0
        else:
            r_new = r_tilde

        self._step += 1
        if not phi_new.is_finite():
            raise DivergenceError(self._step, t_new)
        self._phis.push(t_new, phi_new)
        self._rs.push(t_new, r_new)
        return StepTrace(self._step, t_new, model.energy_total(phi_new), r_new,
                         r_tilde, nan, nan, zeta0, nan, phi_new.mean(), 0,
                         wall=time.perf_counter() - started)

    def run(self, n_steps: int) -> list[StepTrace]:
        return [self.step() for _ in range(n_steps)]

    def modified_energy(self) -> float:
        """Discrete auxiliary energy whose decay the scheme guarantees."""
        flow = self.flow
        phis = self._phis.newest_first(min(2, len(self._phis)))
        rs = self._rs.newest_first(min(2, len(self._rs)))
        if self.k == 1 or len(phis) < 2:
            phi, r = phis[0], rs[0]
            return 0.5 * inner(phi, apply_operator(phi, flow.lin)) + r * r
        phi_n, phi_p = phis
        r_n, r_p = rs
        two_step = 2.0 * phi_n - phi_p
        quad = 0.25 * (inner(phi_n, apply_operator(phi_n, flow.lin))
                       + inner(two_step, apply_operator(two_step, flow.lin)))
        return quad + 0.5 * (r_n ** 2 + (2.0 * r_n - r_p) ** 2)


TRACE_COLUMNS = "step,t,E,R,Rtilde,xi,eta,zeta0,gamma,mass,case"
MSAV_EXTRA_COLUMNS = ",R1,R2,xi1,xi2,eta1,eta2"


def _fmt(v) -> str:
    return f"{v:.17g}"


class TraceWriter:
    """Streams step traces to CSV, flushing every `flush_every` rows."""

    def __init__(self, path, msav: bool = False, flush_every: int = 100):
        self.path = path
        self.msav = msav
        self.flush_every = max(1, int(flush_every))
        self._fh = open(path, "w")
        header = TRACE_COLUMNS + (MSAV_EXTRA_COLUMNS if msav else "")
        self._fh.write(header + "\n")
        self._count = 0

    def write(self, tr: StepTrace):
        row = [str(tr.step), _fmt(tr.t), _fmt(tr.energy), _fmt(tr.r),
               _fmt(tr.r_tilde), _fmt(tr.xi), _fmt(tr.eta), _fmt(tr.zeta0),
               _fmt(tr.gamma), _fmt(tr.mass), str(tr.case)]
        if self.msav:
            row += [_fmt(v if v is not None else math.nan)
                    for v in (tr.r1, tr.r2, tr.xi1, tr.xi2, tr.eta1, tr.eta2)]
        self._fh.write(",".join(row) + "\n")
        self._count += 1
        if self._count % self.flush_every == 0:
            self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
