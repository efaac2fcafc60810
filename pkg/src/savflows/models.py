"""Concrete dissipative systems.

Each model is packaged as the implicit Fourier-multiplier operator of its
stiff linear part, the explicit nonlinear remainder, the (shifted, positive)
free energy, the dissipation functional, and enough metadata for the
auxiliary-variable solvers: the gradient-flow form (linear operator,
mobility, double-well) and, where applicable, a two-component energy split.

Sign convention throughout: the evolution is phi_t + A phi + g(phi) = forcing,
with A the positive implicit operator, so unforced trajectories dissipate the
free energy at rate K(phi) >= 0.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import sympy as sym

from .spectral import (
    DiagonalSymbol,
    Field,
    Grid,
    apply_operator,
    grad_norm_sq,
    identity_symbol,
    inner,
    integrate,
    k_squared,
)


def double_well(v: np.ndarray) -> np.ndarray:
    w = v * v - 1.0
    return 0.25 * w * w


def double_well_prime(v: np.ndarray) -> np.ndarray:
    return v * (v * v - 1.0)


def double_well_second(v: np.ndarray) -> np.ndarray:
    return 3.0 * v * v - 1.0


@dataclass(frozen=True)
class GradientFlowForm:
    """Gradient-flow metadata: mu = lin(phi) + f_prime(phi), phi_t = -mob(mu)."""

    lin: DiagonalSymbol
    mob: DiagonalSymbol
    f: Callable[[np.ndarray], np.ndarray]
    f_prime: Callable[[np.ndarray], np.ndarray]
    c0: float
    mob_is_identity: bool = False

    def apply_mob(self, field: Field) -> Field:
        if self.mob_is_identity:
            return field
        return apply_operator(field, self.mob)


@dataclass(frozen=True)
class EnergySplit:
    """Two-component energy split for the multiple-auxiliary-variable path.

    e1/e2 are shifted positive component energies; de1/de2 their variational
    derivatives (summing to the full chemical potential); g1/g2 the explicit
    per-component terms with g1 + g2 equal to the model's explicit part.
    """

    e1: Callable[[Field], float]
    e2: Callable[[Field], float]
    de1: Callable[[Field], Field]
    de2: Callable[[Field], Field]
    g1: Callable[[Field], Field]
    g2: Callable[[Field], Field]
    mob_apply: Callable[[Field], Field]
    c1: float
    c2: float


@dataclass(frozen=True)
class ModelSpec:
    name: str
    grid: Grid
    implicit: DiagonalSymbol
    explicit: Callable[[Field], Field]
    energy: Callable[[Field], float]
    dissipation: Callable[[Field], float]
    mu: Callable[[Field], Field]
    shift: float
    forcing: Optional[Callable[[float], Field]] = None
    exact: Optional[Callable[[float], Field]] = None
    gradient_flow: Optional[GradientFlowForm] = None
    split: Optional[EnergySplit] = None
    residual_expr: Optional[Callable] = None

    def energy_total(self, phi: Field) -> float:
        return self.energy(phi) - self.shift

    def dissipation_at(self, phi: Field, t: float) -> float:
        """Energy decay rate along trajectories at time t.

        Unforced this is the dissipation functional; with a forcing term the
        chain rule adds the (negated) forcing work, so the auxiliary energy
        keeps tracking the true energy.  The result may then be negative.
        """
        value = self.dissipation(phi)
        if self.forcing is not None:
            value -= inner(self.mu(phi), self.forcing(t))
        return value


def allen_cahn(grid: Grid, alpha: float, c0: float = 1.0,
               lam: float = 0.0) -> ModelSpec:
    """Double-well reaction-diffusion flow (identity mobility).

    `lam` adds an optional linear damping term to the quadratic operator;
    the shipped experiments run with lam = 0.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    lin = DiagonalSymbol(grid, alpha * k_squared(grid) + lam)

    def g(phi: Field) -> Field:
        return Field(grid, double_well_prime(phi.values))

    def mu(phi: Field) -> Field:
        return apply_operator(phi, lin) + g(phi)

    def energy(phi: Field) -> float:
        return (0.5 * alpha * grad_norm_sq(phi)
                + 0.5 * lam * inner(phi, phi)
                + integrate(Field(grid, double_well(phi.values))) + c0)

    def dissipation(phi: Field) -> float:
        m = mu(phi)
        return inner(m, m)

    def residual(u, xs, t):
        return sym.diff(u, t) - alpha * _lap_expr(u, xs) + lam * u + (u ** 3 - u)

    flow = GradientFlowForm(lin=lin, mob=identity_symbol(grid),
                            f=double_well, f_prime=double_well_prime,
                            c0=c0, mob_is_identity=True)
    return ModelSpec("allen-cahn", grid, lin, g, energy, dissipation, mu,
                     shift=c0, gradient_flow=flow, residual_expr=residual)


def cahn_hilliard(grid: Grid, alpha: float, m0: float, c0: float = 1.0,
                  lam: float = 0.0) -> ModelSpec:
    """Conserved double-well flow with mobility m0 (fourth order implicit part)."""
    if alpha <= 0 or m0 <= 0:
        raise ValueError("alpha and m0 must be positive")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    ks = k_squared(grid)
    lin = DiagonalSymbol(grid, alpha * ks + lam)
    mob = DiagonalSymbol(grid, m0 * ks)
    implicit = DiagonalSymbol(grid, m0 * ks * (alpha * ks + lam))

    def g(phi: Field) -> Field:
        return apply_operator(Field(grid, double_well_prime(phi.values)), mob)

    def mu(phi: Field) -> Field:
        return apply_operator(phi, lin) + Field(grid, double_well_prime(phi.values))

    def energy(phi: Field) -> float:
        return (0.5 * alpha * grad_norm_sq(phi)
                + 0.5 * lam * inner(phi, phi)
                + integrate(Field(grid, double_well(phi.values))) + c0)

    def dissipation(phi: Field) -> float:
        return m0 * grad_norm_sq(mu(phi))

    def residual(u, xs, t):
        lap = _lap_expr
        return (sym.diff(u, t) + m0 * alpha * lap(lap(u, xs), xs)
                - m0 * lam * lap(u, xs) - m0 * lap(u ** 3 - u, xs))

    flow = GradientFlowForm(lin=lin, mob=mob, f=double_well,
                            f_prime=double_well_prime, c0=c0)
    return ModelSpec("cahn-hilliard", grid, implicit, g, energy, dissipation, mu,
                     shift=c0, gradient_flow=flow, residual_expr=residual)


def pfc(grid: Grid, epsilon: float, beta: float = 1.0, mobility: float = 1.0,
        c0: float | None = None, implicit_eps_shift: bool = False) -> ModelSpec:
    """Crystal density-field model: conserved flow of a Swift-Hohenberg energy.

    `implicit_eps_shift` moves the linear -eps*phi force into the implicit
    operator (which is then no longer nonnegative near the unstable band);
    the default keeps it explicit so the implicit part stays positive.
    """
    if epsilon <= 0 or beta <= 0 or mobility <= 0:
        raise ValueError("epsilon, beta and mobility must be positive")
    ks = k_squared(grid)
    lin = DiagonalSymbol(grid, (beta - ks) ** 2)
    mob = DiagonalSymbol(grid, mobility * ks)
    shift_term = epsilon if implicit_eps_shift else 0.0
    implicit = DiagonalSymbol(grid, mobility * ks * ((beta - ks) ** 2 - shift_term))
    if c0 is None:
        # pointwise lower bound of v^4/4 - eps*v^2/2 is -eps^2/4
        c0 = grid.volume * epsilon ** 2 / 4.0 + 1.0

    def f(v):
        v2 = v * v
        return 0.25 * v2 * v2 - 0.5 * epsilon * v2

    def f_prime(v):
        return v * (v * v - epsilon)

    def g(phi: Field) -> Field:
        vals = phi.values
        explicit_force = vals * vals * vals - (epsilon - shift_term) * vals
        return apply_operator(Field(grid, explicit_force), mob)

    def mu(phi: Field) -> Field:
        return apply_operator(phi, lin) + Field(grid, f_prime(phi.values))

    def energy(phi: Field) -> float:
        return 0.5 * inner(phi, apply_operator(phi, lin)) + integrate(
            Field(grid, f(phi.values))) + c0

    def dissipation(phi: Field) -> float:
        return mobility * grad_norm_sq(mu(phi))

    def residual(u, xs, t):
        lap = _lap_expr
        mu_expr = (lap(lap(u, xs), xs) + 2.0 * beta * lap(u, xs)
                   + beta ** 2 * u + u ** 3 - epsilon * u)
        return sym.diff(u, t) - mobility * lap(mu_expr, xs)

    flow = GradientFlowForm(lin=lin, mob=mob, f=f, f_prime=f_prime, c0=c0)
    return ModelSpec("pfc", grid, implicit, g, energy, dissipation, mu,
                     shift=c0, gradient_flow=flow, residual_expr=residual)


def vesicle_volume(phi: Field) -> float:
    """Enclosed volume functional: integral of (phi + 1)."""
    return integrate(phi) + phi.grid.volume


def vesicle_area(phi: Field, epsilon: float) -> float:
    """Interface area functional: integral of eps/2 |grad phi|^2 + F(phi)/eps."""
    return (0.5 * epsilon * grad_norm_sq(phi)
            + integrate(Field(phi.grid, double_well(phi.values))) / epsilon)


def vesicle(grid: Grid, epsilon: float, sigma1: float, sigma2: float,
            mobility: float, alpha_vol: float, beta_area: float,
            c1: float = 1.0, c2: float = 1.0) -> ModelSpec:
    """Bending-energy membrane model with penalized volume and area.

    The volume penalty is linear and nonlocal, so it rides implicitly on the
    zero mode; the bending and area nonlinearities stay explicit.  The energy
    split pairs the bending energy with the volume-penalty derivative (first
    component) and the area penalty (second component) so the two variational
    derivatives sum to the full chemical potential.
    """
    for name, v in (("epsilon", epsilon), ("sigma1", sigma1), ("sigma2", sigma2),
                    ("mobility", mobility), ("alpha_vol", alpha_vol),
                    ("beta_area", beta_area)):
        if v <= 0:
            raise ValueError(f"{name} must be positive")
    ks = k_squared(grid)
    neg_lap = DiagonalSymbol(grid, ks)
    implicit = DiagonalSymbol(grid, mobility * epsilon * ks * ks,
                              zero_mode=mobility * grid.volume / sigma1)

    def curvature(phi: Field) -> Field:
        # w = -lap(phi) + G(phi)/eps^2, with G the double-well derivative
        return apply_operator(phi, neg_lap) + Field(
            grid, double_well_prime(phi.values) / epsilon ** 2)

    def bending(phi: Field) -> float:
        w = curvature(phi)
        return 0.5 * epsilon * inner(w, w)

    def de1(phi: Field) -> Field:
        # bending derivative plus the volume-penalty derivative
        w = curvature(phi)
        out = apply_operator(w, neg_lap).values * epsilon
        out += double_well_second(phi.values) * w.values / epsilon
        out += (vesicle_volume(phi) - alpha_vol) / sigma1
        return Field(grid, out)

    def de2(phi: Field) -> Field:
        gap = vesicle_area(phi, epsilon) - beta_area
        vals = (apply_operator(phi, neg_lap).values * epsilon
                + double_well_prime(phi.values) / epsilon)
        return Field(grid, (gap / sigma2) * vals)

    def mu(phi: Field) -> Field:
        return de1(phi) + de2(phi)

    def g1(phi: Field) -> Field:
        # explicit remainder of component 1: de1 minus the implicit part
        w = curvature(phi)
        gfield = Field(grid, double_well_prime(phi.values))
        out = apply_operator(gfield, neg_lap).values / epsilon
        out += double_well_second(phi.values) * w.values / epsilon
        out += (grid.volume - alpha_vol) / sigma1
        return Field(grid, mobility * out)

    def g2(phi: Field) -> Field:
        return mobility * de2(phi)

    def g(phi: Field) -> Field:
        return g1(phi) + g2(phi)

    def energy(phi: Field) -> float:
        vol_gap = vesicle_volume(phi) - alpha_vol
        area_gap = vesicle_area(phi, epsilon) - beta_area
        return (bending(phi) + vol_gap ** 2 / (2.0 * sigma1)
                + area_gap ** 2 / (2.0 * sigma2) + c1 + c2)

    def dissipation(phi: Field) -> float:
        m = mu(phi)
        return mobility * inner(m, m)

    split = EnergySplit(
        e1=lambda phi: bending(phi) + c1,
        e2=lambda phi: (vesicle_area(phi, epsilon) - beta_area) ** 2 / (2.0 * sigma2) + c2,
        de1=de1, de2=de2, g1=g1, g2=g2,
        mob_apply=lambda f: f * mobility,
        c1=c1, c2=c2,
    )
    return ModelSpec("vesicle", grid, implicit, g, energy, dissipation, mu,
                     shift=c1 + c2, split=split)


def with_two_term_split(model: ModelSpec, f1, f1_prime, f2, f2_prime,
                        c1: float = 0.5, c2: float = 0.5) -> ModelSpec:
    """Equip a gradient-flow model with a generic two-term energy split.

    The quadratic part of the energy goes entirely into the first component;
    f1 + f2 must equal the model's potential for the split to be consistent.
    """
    flow = model.gradient_flow
    if flow is None:
        raise ValueError("two-term split requires a gradient-flow model")
    grid = model.grid

    def e1(phi: Field) -> float:
        return (0.5 * inner(phi, apply_operator(phi, flow.lin))
                + integrate(Field(grid, f1(phi.values))) + c1)

    def e2(phi: Field) -> float:
        return integrate(Field(grid, f2(phi.values))) + c2

    def de1(phi: Field) -> Field:
        return apply_operator(phi, flow.lin) + Field(grid, f1_prime(phi.values))

    def de2(phi: Field) -> Field:
        return Field(grid, f2_prime(phi.values))

    split = EnergySplit(
        e1=e1, e2=e2, de1=de1, de2=de2,
        g1=lambda phi: flow.apply_mob(Field(grid, f1_prime(phi.values))),
        g2=lambda phi: flow.apply_mob(Field(grid, f2_prime(phi.values))),
        mob_apply=flow.apply_mob,
        c1=c1, c2=c2,
    )
    return dataclasses.replace(model, split=split)


# --- manufactured solutions -------------------------------------------------

_COORD_SYMBOLS = sym.symbols("x y z")
_TIME_SYMBOL = sym.Symbol("t")


def manufactured_expr(dim: int = 2) -> sym.Expr:
    """The shipped smooth space-time test solution: exp(prod sin(pi x_d)) sin(t)."""
    prod = sym.Integer(1)
    for d in range(dim):
        prod *= sym.sin(sym.pi * _COORD_SYMBOLS[d])
    return sym.exp(prod) * sym.sin(_TIME_SYMBOL)


def _lap_expr(u, xs):
    return sum(sym.diff(u, x, 2) for x in xs)


def _lambdify_on_grid(grid: Grid, expr) -> Callable[[float], Field]:
    xs = _COORD_SYMBOLS[: grid.dim]
    fn = sym.lambdify((*xs, _TIME_SYMBOL), expr, modules="numpy")
    mesh = grid.coords()

    def sample(t: float) -> Field:
        vals = np.asarray(fn(*mesh, t), dtype=np.float64)
        return Field(grid, np.broadcast_to(vals, grid.shape).copy())

    return sample


def with_manufactured_forcing(model: ModelSpec, exact: sym.Expr | None = None) -> ModelSpec:
    """Attach a forcing term that makes `exact` the solution of the model.

    The forcing is the model's PDE residual evaluated on the exact solution
    with closed-form derivatives at the collocation points; the energy and
    dissipation functionals are left unforced.
    """
    if model.residual_expr is None:
        raise ValueError(f"model {model.name!r} has no symbolic residual")
    if exact is None:
        exact = manufactured_expr(model.grid.dim)
    xs = _COORD_SYMBOLS[: model.grid.dim]
    f_expr = sym.simplify(model.residual_expr(exact, xs, _TIME_SYMBOL))
    return dataclasses.replace(
        model,
        forcing=_lambdify_on_grid(model.grid, f_expr),
        exact=_lambdify_on_grid(model.grid, exact),
    )


# --- initial conditions -----------------------------------------------------

def constant_initial(grid: Grid, value: float) -> Field:
    return Field(grid, np.full(grid.shape, float(value)))


def star_initial(grid: Grid, alpha: float) -> Field:
    """Six-pointed star interface centered in a 2D domain."""
    if grid.dim != 2:
        raise ValueError("star initial condition is two-dimensional")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    x, y = grid.coords()
    cx = grid.origin[0] + 0.5 * grid.extents[0]
    cy = grid.origin[1] + 0.5 * grid.extents[1]
    theta = np.arctan2(y - cy, x - cx)
    r = np.sqrt((x - cx) ** 2 + (y - cy) ** 2)
    vals = np.tanh((1.5 + 1.2 * np.cos(6.0 * theta) - 2.0 * np.pi * r)
                   / np.sqrt(2.0 * alpha))
    return Field(grid, vals)


def crystal_initial(grid: Grid, phi_bar: float, c1: float, c2: float,
                    patches: Sequence[tuple[float, float, float, float]]) -> Field:
    """Background density with rotated crystallite lattices in square patches.

    Each patch is (center_x, center_y, side, angle); the rotation orients the
    lattice inside an axis-aligned square window.  Overlapping patches are
    rejected.
    """
    if grid.dim != 2:
        raise ValueError("crystal initial condition is two-dimensional")
    patches = [tuple(float(v) for v in p) for p in patches]
    for p in patches:
        if len(p) != 4 or p[2] <= 0:
            raise ValueError("each patch needs (cx, cy, side, angle) with side > 0")
    for i in range(len(patches)):
        for j in range(i + 1, len(patches)):
            (xi, yi, si, _), (xj, yj, sj, _) = patches[i], patches[j]
            if abs(xi - xj) < (si + sj) / 2 and abs(yi - yj) < (si + sj) / 2:
                raise ValueError(f"crystal patches {i} and {j} overlap")
    x, y = grid.coords()
    vals = np.full(grid.shape, float(phi_bar))
    for cx, cy, side, angle in patches:
        mask = (np.abs(x - cx) <= side / 2) & (np.abs(y - cy) <= side / 2)
        xl = x * np.sin(angle) + y * np.cos(angle)
        yl = -x * np.cos(angle) + y * np.sin(angle)
        lattice = phi_bar + c1 * (np.cos(c2 / np.sqrt(3.0) * yl) * np.cos(c2 * xl)
                                  - 0.5 * np.cos(2.0 * c2 / np.sqrt(3.0) * yl))
        vals = np.where(mask, lattice, vals)
    return Field(grid, vals)


def spheres_initial(grid: Grid, centers: Sequence[Sequence[float]],
                    radii: Sequence[float], epsilon: float) -> Field:
    """Union of diffuse spheres; far from all centers the value tends to -1."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    centers = [tuple(float(v) for v in c) for c in centers]
    radii = [float(r) for r in radii]
    if len(centers) != len(radii) or not centers:
        raise ValueError("need one radius per center and at least one sphere")
    mesh = grid.coords()
    vals = np.full(grid.shape, float(len(centers) - 1))
    for center, radius in zip(centers, radii):
        if len(center) != grid.dim:
            raise ValueError("center dimensionality does not match the grid")
        dist = np.sqrt(sum((m - c) ** 2 for m, c in zip(mesh, center)))
        vals += np.tanh((radius - dist) / (np.sqrt(2.0) * epsilon))
    return Field(grid, vals)


def random_initial(grid: Grid, mean: float, amplitude: float, seed: int) -> Field:
    """Seeded uniform perturbation in [-amplitude, amplitude] around a mean."""
    rng = np.random.default_rng(seed)
    return Field(grid, mean + amplitude * rng.uniform(-1.0, 1.0, grid.shape))


def smooth_random_field(grid: Grid, seed: int, amplitude: float = 0.3,
                        max_mode: int = 3) -> Field:
    """Band-limited random field (low Fourier modes only); used by the
    variational and identity checks, which need smooth data."""
    rng = np.random.default_rng(seed)
    mesh = grid.coords()
    vals = np.zeros(grid.shape)
    for _ in range(4):
        ms = rng.integers(-max_mode, max_mode + 1, size=grid.dim)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        amp = rng.uniform(0.2, 1.0)
        arg = sum(2.0 * np.pi * m / L * (x - x0) for m, L, x, x0 in
                  zip(ms, grid.extents, mesh, grid.origin))
        vals += amp * np.cos(arg + phase)
    vmax = np.abs(vals).max()
    if vmax > 0:
        vals *= amplitude / vmax
    return Field(grid, vals)


# --- registries for the CLI -------------------------------------------------

@dataclass(frozen=True)
class BuilderEntry:
    fn: Callable
    required: tuple[str, ...]
    optional: tuple[str, ...]


MODELS = {
    "allen-cahn": BuilderEntry(allen_cahn, ("alpha",), ("c0", "lam")),
    "cahn-hilliard": BuilderEntry(cahn_hilliard, ("alpha", "m0"), ("c0", "lam")),
    "pfc": BuilderEntry(pfc, ("epsilon",),
                        ("beta", "mobility", "c0", "implicit_eps_shift")),
    "vesicle": BuilderEntry(
        vesicle, ("epsilon", "sigma1", "sigma2"),
        ("mobility", "alpha_vol", "beta_area", "c1", "c2")),
}

INITIALS = {
    "constant": BuilderEntry(constant_initial, ("value",), ()),
    "star": BuilderEntry(star_initial, ("alpha",), ()),
    "crystal": BuilderEntry(crystal_initial, ("phi_bar", "c1", "c2", "patches"), ()),
    "spheres": BuilderEntry(spheres_initial, ("centers", "radii", "epsilon"), ()),
    "random": BuilderEntry(random_initial, ("mean", "amplitude"), ("seed",)),
}
