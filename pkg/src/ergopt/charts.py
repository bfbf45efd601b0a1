"""Adapted local charts, hyperbolicity constants, cones and graph transforms.

Charts are affine: chart coordinates are the components of the displacement
from the base point in the (unstable, stable) frame, scaled by chain-max
weights, and the chart norm is the plain sup norm of those coordinates.  For
the exact cat map the frame is the constant orthonormal eigenbasis and all
weights are 1, so the chart norm coincides with the ambient metric.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import systems
from .systems import DynamicalSystem, torus_norm


class InfeasibleConstantsError(RuntimeError):
    """A sampled hyperbolicity inequality failed; carries the worst violation."""

    def __init__(self, violation, margin, detail=""):
        super().__init__(f"infeasible constants: {violation} (margin {margin:.3e}) {detail}")
        self.violation = violation
        self.margin = margin


class CertificationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# constants

@dataclass
class HyperbolicConstants:
    """The tuple (sigma_u, sigma_s, eta, rho) plus every derived constant.

    Derived fields are filled by `derive_constants`; `margins` records the
    worst sampled verification margins from `build_charts`.
    """

    sigma_u: float = 2.6
    sigma_s: float = 0.39
    eta: float = 0.01
    rho: float = 0.05
    # filled by derive_constants
    lip_f: Optional[float] = None
    lip_gamma: Optional[float] = None
    eps_as: Optional[float] = None
    K_as: Optional[float] = None
    lam_as: Optional[float] = None
    K_aps: Optional[float] = None
    N_as: Optional[int] = None
    diam_omega: Optional[float] = None
    delta_as: Optional[float] = None
    K_lambda: Optional[float] = None
    margins: Optional[dict] = None

    def __post_init__(self):
        if not (self.sigma_u > 1.0 > self.sigma_s > 0.0):
            raise ValueError("need sigma_u > 1 > sigma_s > 0")
        if not (self.eta < min((self.sigma_u - 1.0) / 6.0, (1.0 - self.sigma_s) / 6.0)):
            raise ValueError("eta too large for the chart inequalities")
        if self.rho <= 0:
            raise ValueError("rho must be positive")

    # -- closed-form quantities --------------------------------------------
    @property
    def eps_rho(self) -> float:
        return self.rho * min((self.sigma_u - 1.0) / 2.0, (1.0 - self.sigma_s) / 8.0)

    @property
    def alpha(self) -> float:
        """Cone/graph slope 6 eta / (sigma_u - sigma_s)."""
        return 6.0 * self.eta / (self.sigma_u - self.sigma_s)

    @property
    def exp_neg_lam_gamma(self) -> float:
        return max((self.sigma_s + 3.0 * self.eta) / (1.0 - 3.0 * self.eta),
                   1.0 / (self.sigma_u - 3.0 * self.eta))

    @property
    def lam_gamma(self) -> float:
        return -math.log(self.exp_neg_lam_gamma)

    @property
    def K_gamma(self) -> float:
        return 5.0 / (1.0 - self.exp_neg_lam_gamma) ** 2

    @property
    def contraction(self) -> float:
        """Graph-transform contraction factor sigma_s + 2 eta."""
        return self.sigma_s + 2.0 * self.eta

    def shadowing_eta_ok(self) -> bool:
        return self.eta < min((1.0 - self.sigma_s) ** 2 / 12.0, (self.sigma_u - 1.0) / 6.0)

    def require_shadowing_eta(self):
        if not self.shadowing_eta_ok():
            raise ValueError("eta violates the strengthened shadowing bound")

    def to_flat_dict(self) -> dict:
        out = {
            "sigma_u": self.sigma_u, "sigma_s": self.sigma_s,
            "eta": self.eta, "rho": self.rho,
            "eps_rho": self.eps_rho, "alpha": self.alpha,
            "exp_neg_lam_gamma": self.exp_neg_lam_gamma,
            "lam_gamma": self.lam_gamma, "K_gamma": self.K_gamma,
            "contraction": self.contraction,
            "lip_f": self.lip_f, "lip_gamma": self.lip_gamma,
            "eps_as": self.eps_as, "K_as": self.K_as, "lam_as": self.lam_as,
            "K_aps": self.K_aps, "N_as": self.N_as,
            "diam_omega": self.diam_omega, "delta_as": self.delta_as,
            "K_lambda": self.K_lambda,
        }
        if self.margins:
            for k, v in self.margins.items():
                out[f"margin_{k}"] = v
        return out


# ---------------------------------------------------------------------------
# charts and local maps

@dataclass(frozen=True)
class AdaptedChart:
    """Affine chart at `x` with frame columns (unstable, stable) and weights.

    Chart coordinates: c = nu * (W^-1 (p - x)); the chart norm is max|c|.
    """

    x: np.ndarray
    W: np.ndarray
    W_inv: np.ndarray
    nu: np.ndarray

    def to_chart(self, p):
        # chart displacements are far below 1/2 in every coordinate, so the
        # per-axis rounding reduction is the minimal representative
        d = np.asarray(p, dtype=float) - self.x
        d = d - np.round(d)
        return (d @ self.W_inv.T) * self.nu

    def from_chart(self, c):
        c = np.asarray(c, dtype=float)
        return systems.mod1(self.x + (c / self.nu) @ self.W.T)

    def norm(self, c):
        return np.max(np.abs(np.asarray(c, dtype=float)), axis=-1)

    def proj_u(self, c):
        return np.asarray(c)[..., 0]

    def proj_s(self, c):
        return np.asarray(c)[..., 1]

    def lip_gamma(self) -> float:
        """max of Lip(chart map) and Lip(inverse) between chart and ambient norms."""
        corners = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
        fwd = float(np.max(torus_norm((corners / self.nu) @ self.W.T)))
        M = (self.nu[:, None] * self.W_inv) @ systems.V_EIG
        inv = float(np.max(np.sum(np.abs(M), axis=1)))
        return max(fwd, inv)


@dataclass(frozen=True)
class LocalMap:
    """The map between two charts, f_{x,y} = chart_y^-1 o f o chart_x, with its
    linearization at 0 in (unstable, stable) block form.

    For the exact cat map the local map is exactly affine diagonal on the
    chart range (the wrap branch is constant there), recorded in `affine`.
    """

    src: AdaptedChart
    dst: AdaptedChart
    system: DynamicalSystem
    A: np.ndarray
    affine: Optional[tuple] = None    # (shift, diagonal) when exactly affine

    def __call__(self, c):
        if self.affine is not None:
            a0, d = self.affine
            return a0 + np.asarray(c, dtype=float) * d
        return self.dst.to_chart(self.system.f(self.src.from_chart(c)))

    def many(self, C):
        if self.affine is not None:
            a0, d = self.affine
            return a0[None, :] + np.atleast_2d(C) * d[None, :]
        P = self.src.from_chart(np.atleast_2d(C))
        return self.dst.to_chart(self.system.f_many(P))

    @property
    def a_u(self):
        return self.A[0, 0]

    @property
    def a_s(self):
        return self.A[1, 1]

    @property
    def d_u(self):
        return self.A[0, 1]

    @property
    def d_s(self):
        return self.A[1, 0]

    def shift0(self):
        """Image of the chart origin, f_{x,y}(0)."""
        return self.dst.to_chart(self.system.f(self.src.x))


class ChartFamily:
    """Charts on demand at arbitrary base points of a torus system."""

    def __init__(self, system: DynamicalSystem, constants: HyperbolicConstants,
                 frame_iters: int = 22):
        if system.kind != "torus":
            raise ValueError("charts exist for torus systems only")
        self.system = system
        self.constants = constants
        self.frame_iters = frame_iters
        self._cache = {}
        self._chain_N = self._chain_length()

    def _chain_length(self) -> int:
        """Smallest N with 2 C exp(N lam_s) <= sigma_s^N and the unstable analogue."""
        c = self.constants
        ku, ks = math.log(c.sigma_u), math.log(c.sigma_s)
        lu, ls = self.system.lam_u, self.system.lam_s
        n_s = math.log(2.0 * self.system.C_lam) / (ks - ls) if ks > ls else 1.0
        n_u = math.log(2.0 * self.system.C_lam) / (lu - ku) if lu > ku else 1.0
        return max(2, int(math.ceil(max(n_s, n_u))))

    def chart_at(self, x) -> AdaptedChart:
        x = np.asarray(x, dtype=float) % 1.0
        key = x.tobytes()
        chart = self._cache.get(key)
        if chart is None:
            chart = self._build_chart(x)
            self._cache[key] = chart
        return chart

    def _build_chart(self, x) -> AdaptedChart:
        if self.system.is_linear_cat:
            return AdaptedChart(x=x, W=systems.V_EIG.copy(),
                                W_inv=systems.V_EIG.T.copy(), nu=np.ones(2))
        eu, es, mults_u, mults_s = self._frames_and_multipliers(x)
        nu = self._chain_weights(mults_u, mults_s)
        W = np.column_stack([eu, es])
        return AdaptedChart(x=x, W=W, W_inv=np.linalg.inv(W), nu=nu)

    def _frames_and_multipliers(self, x):
        """Power-iterated unstable/stable directions at x, plus the one-step
        frame multipliers along the forward orbit and the preorbit (used by the
        chain-max weights)."""
        L = self.frame_iters
        N = self._chain_N
        sys_ = self.system
        # forward orbit x_0..x_{N+L}, preorbit x_{-1}..x_{-(N+L)}
        fwd = [x]
        for _ in range(N + L):
            fwd.append(sys_.f(fwd[-1]))
        bwd = [x]
        for _ in range(N + L):
            bwd.append(systems.preimage(sys_, bwd[-1]))
        # unstable direction: push a generic vector from the deep preimage to x
        # (push-forward is self-correcting for the unstable direction)
        v = systems.EIG_U.copy()
        mults_u_pre = []  # multipliers along the preorbit segment into x
        for k in range(N + L, 0, -1):
            v = sys_.df(bwd[k]) @ v
            s = float(np.linalg.norm(v))
            v /= s
            if k <= N:
                mults_u_pre.append(s)
        eu = v if v @ systems.EIG_U >= 0 else -v
        # stable directions along the forward orbit by pull-back from the far
        # end (inverse iteration is self-correcting for the stable direction);
        # each multiplier uses the locally recomputed frame, a single forward
        # push of which does not amplify unstable contamination
        es_at = [None] * (N + L + 1)
        w = systems.EIG_S.copy()
        es_at[N + L] = w
        for k in range(N + L - 1, -1, -1):
            w = np.linalg.solve(sys_.df(fwd[k]), w)
            w /= np.linalg.norm(w)
            es_at[k] = w
        es = es_at[0] if es_at[0] @ systems.EIG_S >= 0 else -es_at[0]
        mults_s_fwd = [float(np.linalg.norm(sys_.df(fwd[k]) @ es_at[k]))
                       for k in range(N)]
        return eu, es, np.array(mults_u_pre), np.array(mults_s_fwd)

    def _chain_weights(self, mults_u, mults_s):
        """Chain maxima of the adapted-norm construction along the sampled orbit
        segments; collapse to 1 whenever the one-step constants already hold."""
        c = self.constants
        ku, ks = math.log(c.sigma_u), math.log(c.sigma_s)
        nu_u = 1.0
        prod = 1.0
        for m, s in enumerate(reversed(mults_u), start=1):  # last m steps into x
            prod *= s
            nu_u = max(nu_u, math.exp(m * ku) / prod)
        nu_s = 1.0
        prod = 1.0
        for m, s in enumerate(mults_s, start=1):            # first m steps from x
            prod *= s
            nu_s = max(nu_s, prod * math.exp(-m * ks))
        return np.array([nu_u, nu_s])

    def local_map(self, x, y) -> LocalMap:
        cx, cy = self.chart_at(x), self.chart_at(y)
        A = (cy.nu[:, None] * cy.W_inv) @ self.system.df(cx.x) @ (cx.W / cx.nu[None, :])
        affine = None
        if self.system.is_linear_cat:
            a0 = cy.to_chart(self.system.f(cx.x))
            affine = (a0, np.array([systems.LAM_U, systems.LAM_S]))
        return LocalMap(src=cx, dst=cy, system=self.system, A=A, affine=affine)


# ---------------------------------------------------------------------------
# construction and verification

def build_charts(system: DynamicalSystem, draft: Optional[HyperbolicConstants] = None,
                 n_transitions: int = 100, n_nonlin: int = 24, seed: int = 0):
    """Build the chart family and verify the chart inequalities on a sample.

    For every sampled admissible transition x -> y the four block inequalities
    are checked: unstable expansion >= sigma_u, stable contraction <= sigma_s,
    off-diagonal blocks <= eta, and the nonlinearity ||Df(v) - A|| <= eta over
    the chart ball.  Raises InfeasibleConstantsError with the worst margin.
    """
    constants = draft if draft is not None else HyperbolicConstants()
    family = ChartFamily(system, constants)
    rng = np.random.default_rng(seed)
    n_t = n_transitions if system.is_linear_cat else max(8, n_transitions // 8)

    margins = {"expansion": math.inf, "contraction": math.inf,
               "offdiag": math.inf, "nonlinearity": math.inf, "shift0": math.inf}
    worst = None
    for t in range(n_t):
        x = rng.random(2)
        fx = system.f(x)
        if t % 2 == 0:
            y = fx
        else:
            jitter = (rng.random(2) - 0.5) * constants.eps_rho
            y = (fx + jitter) % 1.0
        lm = family.local_map(x, y)
        margins["expansion"] = min(margins["expansion"], abs(lm.a_u) - constants.sigma_u)
        margins["contraction"] = min(margins["contraction"], constants.sigma_s - abs(lm.a_s))
        margins["offdiag"] = min(margins["offdiag"],
                                 constants.eta - max(abs(lm.d_u), abs(lm.d_s)))
        margins["shift0"] = min(margins["shift0"],
                                constants.eps_rho - float(lm.dst.norm(lm.shift0())))
        # nonlinearity over the chart ball
        V = (rng.random((n_nonlin, 2)) * 2.0 - 1.0) * constants.rho
        worst_nl = 0.0
        for v in V:
            p = lm.src.from_chart(v)
            Av = (lm.dst.nu[:, None] * lm.dst.W_inv) @ system.df(p) @ (lm.src.W / lm.src.nu[None, :])
            worst_nl = max(worst_nl, float(np.max(np.sum(np.abs(Av - lm.A), axis=1))))
        margins["nonlinearity"] = min(margins["nonlinearity"], constants.eta - worst_nl)

    worst = min(margins, key=margins.get)
    if margins[worst] < 0:
        raise InfeasibleConstantsError(worst, margins[worst])
    constants = replace(constants, margins={k: float(v) for k, v in margins.items()})
    family.constants = constants
    return family, constants


def derive_constants(base: HyperbolicConstants, system: DynamicalSystem,
                     family: Optional[ChartFamily] = None,
                     n_samples: int = 256, seed: int = 0) -> HyperbolicConstants:
    """Fill every derived constant (shadowing, periodic shadowing, Livsic)."""
    base.require_shadowing_eta()
    if family is None:
        family = ChartFamily(system, base)
    if system.is_linear_cat:
        lip_f = systems.LAM_U
        lip_gamma = 1.0
    else:
        lip_f = system.lip_f
        rng = np.random.default_rng(seed)
        lip_gamma = 1.0
        for x in rng.random((max(4, n_samples // 16), 2)):
            lip_gamma = max(lip_gamma, family.chart_at(x).lip_gamma())
    eps_as = base.eps_rho / ((1.0 + lip_gamma) ** 2 * (1.0 + lip_f))
    K_as = lip_gamma ** 2 * base.K_gamma
    lam_as = base.lam_gamma
    e = math.exp(-lam_as)
    K_aps = K_as * (1.0 + e) / (1.0 - e)
    N_as = system.covering_number(eps_as / 2.0)
    diam = system.diameter()
    delta_as = N_as * diam
    K_lambda = max((N_as + 1) * diam / eps_as, K_aps)
    return replace(base, lip_f=lip_f, lip_gamma=lip_gamma, eps_as=eps_as,
                   K_as=K_as, lam_as=lam_as, K_aps=K_aps, N_as=N_as,
                   diam_omega=diam, delta_as=delta_as, K_lambda=K_lambda)


# ---------------------------------------------------------------------------
# cones

def cone_membership(w, side: str, alpha: float) -> bool:
    """Closed cone test |P^s w| <= alpha |P^u w| (side "u") or the dual (side "s")."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    w = np.asarray(w, dtype=float)
    wu, ws = abs(w[0]), abs(w[1])
    if side == "u":
        return ws <= alpha * wu
    if side == "s":
        return wu <= alpha * ws
    raise ValueError("side must be 'u' or 's'")


@dataclass(frozen=True)
class ConeReport:
    alpha: float
    beta: float
    in_cone_u: bool
    image_in_cone_beta: Optional[bool]
    expansion_measured: Optional[float]
    expansion_lower: float
    image_in_cone_s: bool
    preimage_in_cone_beta_s: Optional[bool]
    contraction_measured: Optional[float]
    contraction_upper: float
    ok: bool


def cone_propagate(a, b, local_map: LocalMap, alpha: float,
                   constants: HyperbolicConstants) -> ConeReport:
    """Measure the cone equivariance of one transition for the pair (a, b).

    Forward: a difference in the alpha-unstable cone lands in the beta-unstable
    cone with beta = (alpha sigma_s + 3 eta)/(sigma_u - 3 eta) and expands by at
    least sigma_u - 3 eta.  Backward: an image difference in the alpha-stable
    cone has its preimage in the beta-stable cone and contracts by at most
    sigma_s + 3 eta.
    """
    c = constants
    if not (c.alpha < alpha < 1.0):
        raise ValueError("alpha must lie in (6 eta/(sigma_u - sigma_s), 1)")
    beta = (alpha * c.sigma_s + 3.0 * c.eta) / (c.sigma_u - 3.0 * c.eta)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    w = b - a
    fw = np.asarray(local_map(b)) - np.asarray(local_map(a))
    zero = not np.any(w)

    in_u = zero or cone_membership(w, "u", alpha)
    img_in_beta = exp_meas = None
    if in_u and not zero:
        img_in_beta = cone_membership(fw, "u", beta)
        if abs(w[0]) > 0:
            exp_meas = abs(fw[0]) / abs(w[0])
    in_s_img = zero or cone_membership(fw, "s", alpha)
    pre_in_beta = con_meas = None
    if in_s_img and not zero:
        pre_in_beta = cone_membership(w, "s", beta)
        if abs(w[1]) > 0:
            con_meas = abs(fw[1]) / abs(w[1])

    ok = True
    if img_in_beta is False:
        ok = False
    if exp_meas is not None and exp_meas < c.sigma_u - 3.0 * c.eta - 1e-12:
        ok = False
    if pre_in_beta is False:
        ok = False
    if con_meas is not None and con_meas > c.sigma_s + 3.0 * c.eta + 1e-12:
        ok = False
    return ConeReport(alpha=alpha, beta=beta, in_cone_u=in_u,
                      image_in_cone_beta=img_in_beta, expansion_measured=exp_meas,
                      expansion_lower=c.sigma_u - 3.0 * c.eta,
                      image_in_cone_s=in_s_img, preimage_in_cone_beta_s=pre_in_beta,
                      contraction_measured=con_meas,
                      contraction_upper=c.sigma_s + 3.0 * c.eta, ok=ok)


# ---------------------------------------------------------------------------
# piecewise-linear graphs over the unstable direction

DEFAULT_NODES_PER_RADIUS = 64


@functools.lru_cache(maxsize=64)
def _node_grid_cached(rho: float, n: int):
    g = np.linspace(-rho, rho, n)
    g.setflags(write=False)
    return g


def _node_grid(rho, n):
    return _node_grid_cached(float(rho), int(n))


@dataclass
class PLGraph:
    """Piecewise-linear graph B^u(rho) -> B^s(rho) on a uniform node grid."""

    rho: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.values) % 2 == 0 or len(self.values) < 3:
            raise ValueError("node count must be odd and at least 3")

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def nodes(self) -> np.ndarray:
        return _node_grid(self.rho, self.n)

    @property
    def h(self) -> float:
        return 2.0 * self.rho / (self.n - 1)

    def __call__(self, v):
        return np.interp(v, self.nodes, self.values)

    def slope(self) -> float:
        return float(np.max(np.abs(np.diff(self.values)))) / self.h

    def height(self) -> float:
        return float(abs(self.values[(self.n - 1) // 2]))

    def sup_dist(self, other: "PLGraph") -> float:
        return float(np.max(np.abs(self.values - other.values)))

    def certify(self, constants: HyperbolicConstants, slack: float = 0.0):
        """Check membership in the admissible graph class; returns measured data."""
        a = constants.alpha
        ok = (self.slope() <= a + slack
              and self.height() <= constants.rho / 2.0 + slack
              and float(np.max(np.abs(self.values))) <= constants.rho + slack)
        return ok, {"slope": self.slope(), "slope_bound": a,
                    "height": self.height(), "height_bound": constants.rho / 2.0,
                    "slack": slack}

    def to_csv(self, path):
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["unstable", "stable"])
            for v, s in zip(self.nodes, self.values):
                w.writerow([repr(float(v)), repr(float(s))])


def zero_graph(rho: float, n_nodes: Optional[int] = None) -> PLGraph:
    n = n_nodes if n_nodes is not None else 2 * DEFAULT_NODES_PER_RADIUS + 1
    return PLGraph(rho=rho, values=np.zeros(n))


def constant_graph(rho: float, c: float, n_nodes: Optional[int] = None) -> PLGraph:
    n = n_nodes if n_nodes is not None else 2 * DEFAULT_NODES_PER_RADIUS + 1
    return PLGraph(rho=rho, values=np.full(n, float(c)))


ROOT_TOL = 1e-13


def _vector_root(fun, lo, hi, flo, fhi, tol=ROOT_TOL, max_iter=80):
    """Vectorized Illinois (false position with stale-endpoint damping) for
    residuals with a sign change on [lo, hi]; bisection steps are interleaved
    so progress is guaranteed.  Exact on affine residuals in two iterations."""
    lo = lo.astype(float).copy()
    hi = hi.astype(float).copy()
    sgn = np.where(fhi >= flo, 1.0, -1.0)
    flo = flo * sgn
    fhi = fhi * sgn
    side = np.zeros_like(lo)
    for it in range(max_iter):
        width = hi - lo
        if float(np.max(width)) <= tol:
            break
        denom = fhi - flo
        ok = np.abs(denom) > 0.0
        x = np.where(ok, (lo * fhi - hi * flo) / np.where(ok, denom, 1.0),
                     0.5 * (lo + hi))
        pad = 1e-3 * width
        x = np.clip(x, lo + pad, hi - pad)
        if it % 4 == 3:
            x = 0.5 * (lo + hi)
        fx = fun(x) * sgn
        hit = fx == 0.0
        neg = fx <= 0.0
        stale_hi = neg & (side > 0)
        stale_lo = (~neg) & (side < 0)
        fhi = np.where(stale_hi, 0.5 * fhi, fhi)
        flo = np.where(stale_lo, 0.5 * flo, flo)
        lo = np.where(neg, x, lo)
        flo = np.where(neg, fx, flo)
        hi = np.where(neg, hi, x)
        fhi = np.where(neg, fhi, fx)
        lo = np.where(hit, x, lo)
        hi = np.where(hit, x, hi)
        side = np.where(neg, 1.0, -1.0)
    return 0.5 * (lo + hi)


def _graph_unstable_solve(G: PLGraph, lm: LocalMap, targets, psi=None,
                          root_tol: float = ROOT_TOL, what: str = "graph"):
    """Solve P^u f(v + G(v)) = t for each target t on the graph.

    The scalar map is strictly monotone (expansion at least sigma_u - 3 eta
    along the graph), so per-target node brackets come from one scan of the
    node images; `psi` can pass precomputed node images.
    """
    src_nodes = G.nodes
    if psi is None:
        psi = lm.many(np.column_stack([src_nodes, G.values]))[:, 0]
    d = np.diff(psi)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise InfeasibleConstantsError(f"{what}-monotonicity", float(np.min(np.abs(d))))
    increasing = psi[0] < psi[-1]
    asc = psi if increasing else psi[::-1]
    nodes_asc = src_nodes if increasing else src_nodes[::-1]
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    short = float(min(np.min(targets) - asc[0], asc[-1] - np.max(targets)))
    if short < -1e-12:
        raise InfeasibleConstantsError(f"{what}-coverage", short)
    j = np.clip(np.searchsorted(asc, targets), 1, G.n - 1)
    lo = np.minimum(nodes_asc[j - 1], nodes_asc[j])
    hi = np.maximum(nodes_asc[j - 1], nodes_asc[j])

    def resid(v):
        return lm.many(np.column_stack([v, G(v)]))[:, 0] - targets

    return _vector_root(resid, lo, hi, resid(lo), resid(hi), tol=root_tol)


def graph_transform(G: PLGraph, lm: LocalMap, constants: HyperbolicConstants,
                    root_tol: float = ROOT_TOL, certify: bool = True) -> PLGraph:
    """Forward graph transform: push Graph(G) through the local map and read the
    image off as a graph over the target unstable ball.

    For each target node t the unstable equation P^u f(v + G(v)) = t is solved
    by monotone root-finding, and the new stable value is P^s f(v + G(v)).
    """
    Gt, _ = _graph_transform_data(G, lm, constants, root_tol, certify)
    return Gt


def _graph_transform_data(G, lm, constants, root_tol=ROOT_TOL, certify=True):
    rho = constants.rho
    psi = lm.many(np.column_stack([G.nodes, G.values]))[:, 0]
    targets = _node_grid(rho, G.n)
    vstar = _graph_unstable_solve(G, lm, targets, psi=psi, root_tol=root_tol)
    out = lm.many(np.column_stack([vstar, G(vstar)]))
    Gt = PLGraph(rho=rho, values=out[:, 1])
    if certify:
        slack = 4.0 * root_tol / G.h + 4.0 * root_tol
        ok, data = Gt.certify(constants, slack=slack)
        if not ok:
            raise CertificationError(f"transformed graph left the class: {data}")
    return Gt, psi


def solve_on_graph(G: PLGraph, lm: LocalMap, target_u: float, psi=None,
                   root_tol: float = ROOT_TOL) -> np.ndarray:
    """The point p on Graph(G) with P^u f(p) = target_u (chart coordinates)."""
    v = float(_graph_unstable_solve(G, lm, [target_u], psi=psi,
                                    root_tol=root_tol, what="point")[0])
    return np.array([v, float(G(v))])


# ---------------------------------------------------------------------------
# local unstable manifolds

def chain_local_maps(family: ChartFamily, chain) -> list:
    pts = [np.asarray(p, dtype=float) % 1.0 for p in chain]
    return [family.local_map(pts[i], pts[i + 1]) for i in range(len(pts) - 1)]


def local_unstable_manifold(family: ChartFamily, chain, n: Optional[int] = None,
                            n_nodes: Optional[int] = None, certificate: bool = False):
    """Iterated forward transforms of the zero graph along a backward chain.

    `chain` is a sequence of admissible transition points ending at the chart
    of interest.  Returns the deepest graph; with `certificate=True` also the
    sup distances between successive depths at the final chart (geometric decay
    at rate at most sigma_s + 2 eta).
    """
    lms = chain_local_maps(family, chain)
    if n is None:
        n = len(lms)
    if n > len(lms):
        raise ValueError("chain too short for the requested depth")
    lms = lms[-n:]
    c = family.constants
    if not certificate:
        G = zero_graph(c.rho, n_nodes)
        for lm in lms:
            G = graph_transform(G, lm, c)
        return G, None
    # triangular pass: depth[m] at chain position j is the m-fold transform of
    # the zero graph started at position j-m
    prev = [zero_graph(c.rho, n_nodes) for _ in range(n + 1)]
    final = [prev[-1]]
    for m in range(1, n + 1):
        cur = []
        for j in range(m, n + 1):
            cur.append(graph_transform(prev[j - 1], lms[j - 1], c))
        prev = [None] * m + cur
        final.append(prev[-1])
    diffs = np.array([final[m].sup_dist(final[m - 1]) for m in range(1, n + 1)])
    return final[-1], diffs


def unstable_manifold_at_fixed_point(family: ChartFamily, x_fix, n: int,
                                     n_nodes: Optional[int] = None):
    """Manifold iteration along the constant chain at a fixed point; returns the
    final graph and all successive sup differences."""
    lm = family.local_map(x_fix, x_fix)
    c = family.constants
    G = zero_graph(c.rho, n_nodes)
    diffs = []
    for _ in range(n):
        Gn = graph_transform(G, lm, c)
        diffs.append(Gn.sup_dist(G))
        G = Gn
    return G, np.array(diffs)
