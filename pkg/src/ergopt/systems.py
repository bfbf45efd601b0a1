"""Phase spaces, metrics, built-in hyperbolic systems and Lipschitz observables.

Two phase spaces are built in:

* the flat 2-torus carrying the family of (possibly perturbed) cat maps,
  with the sup metric taken in the eigenbasis of the linear map, and
* the space of finite admissible words of the golden-mean shift with the
  usual 2^(-first-mismatch) metric.

All evaluators are pure; systems and observables are immutable after
construction and safe to share between workers.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

PHI = (1.0 + math.sqrt(5.0)) / 2.0
LAM_U = PHI * PHI            # unstable multiplier (3 + sqrt 5)/2 of the cat map
LAM_S = 1.0 / LAM_U          # stable multiplier (3 - sqrt 5)/2
A_CAT = np.array([[2.0, 1.0], [1.0, 1.0]])
A_CAT_INT = ((2, 1), (1, 1))

_EN = math.sqrt(PHI * PHI + 1.0)
EIG_U = np.array([PHI, 1.0]) / _EN    # unit eigenvector for LAM_U
EIG_S = np.array([1.0, -PHI]) / _EN   # unit eigenvector for LAM_S, orthogonal to EIG_U
V_EIG = np.column_stack([EIG_U, EIG_S])   # orthogonal (det = -1): eigen coords are V_EIG.T @ w

_WRAPS = np.array([[i, j] for i in (-1, 0, 1) for j in (-1, 0, 1)], dtype=float)


def mod1(x):
    """Reduce to [0, 1); unlike a bare `% 1.0` this never returns 1.0 (which a
    tiny negative float would otherwise produce)."""
    m = np.asarray(x, dtype=float) % 1.0
    return np.where(m >= 1.0, 0.0, m)


def eig_coords(w):
    """Coordinates of ambient vectors in the orthonormal eigenbasis of the cat map."""
    return np.asarray(w, dtype=float) @ V_EIG


def from_eig_coords(c):
    return np.asarray(c, dtype=float) @ V_EIG.T


def torus_norm(w):
    """Sup norm of the eigen coordinates; the ambient norm of every torus system."""
    c = eig_coords(w)
    return np.max(np.abs(c), axis=-1)


def torus_dist(x, y):
    """Distance on T^2 induced by `torus_norm` (min over integer translates).

    After the per-coordinate rounding reduction the minimizing translate lies in
    {-1,0,1}^2, so the scan below is exact.
    """
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    d = d - np.round(d)
    cand = d[..., None, :] + _WRAPS
    return np.min(np.max(np.abs(cand @ V_EIG), axis=-1), axis=-1)


def torus_reduce(delta):
    """Representative of `delta` mod Z^2 of minimal `torus_norm`."""
    d = np.asarray(delta, dtype=float)
    d = d - np.round(d)
    cand = d[..., None, :] + _WRAPS
    n = np.max(np.abs(cand @ V_EIG), axis=-1)
    idx = np.argmin(n, axis=-1)
    return np.take_along_axis(cand, idx[..., None, None], axis=-2)[..., 0, :]


@functools.lru_cache(maxsize=None)
def torus_covering_radius(n_grid: int = 1500) -> float:
    """Upper bound on max_x d(x, Z^2), i.e. the torus diameter in this metric.

    Computed on an n_grid x n_grid sample with the 1-Lipschitz padding
    sqrt(2)/(2 n_grid), so the returned value is a certified upper bound.
    """
    g = (np.arange(n_grid) + 0.5) / n_grid
    X = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    dmax = float(torus_dist(X, np.zeros(2)).max())
    return dmax + math.sqrt(2.0) / (2.0 * n_grid)


@functools.lru_cache(maxsize=None)
def lattice_min_norm() -> float:
    """min over nonzero k in Z^2 of torus_norm(k); exact finite scan."""
    best = math.inf
    for i in range(-3, 4):
        for j in range(-3, 4):
            if i == 0 and j == 0:
                continue
            best = min(best, float(torus_norm(np.array([i, j], dtype=float))))
    return best


# ---------------------------------------------------------------------------
# golden-mean words

@functools.lru_cache(maxsize=None)
def admissible_words(depth: int) -> tuple:
    """All words of the given length over {0,1} without the factor '11', sorted."""
    words = [""]
    for _ in range(depth):
        words = [w + "0" for w in words] + [w + "1" for w in words if not w or w[-1] == "0"]
    return tuple(sorted(words))


def fibonacci_count(depth: int) -> int:
    """Number of admissible words of a given length (F(depth+2), F(1)=F(2)=1)."""
    a, b = 1, 1
    for _ in range(depth):
        a, b = b, a + b
    return b


def word_dist(x: str, y: str) -> float:
    if x == y:
        return 0.0
    for i, (a, b) in enumerate(zip(x, y)):
        if a != b:
            return 2.0 ** (-i)
    return 2.0 ** (-min(len(x), len(y)))


# ---------------------------------------------------------------------------
# systems

@dataclass(frozen=True)
class DynamicalSystem:
    """A phase space with a map, its differential and hyperbolicity metadata.

    `kind` is "torus" or "shift".  Torus points are arrays in [0,1)^2, shift
    points are admissible words (str).  `lam_u`/`lam_s` are the one-step
    expansion/contraction multipliers, `C_lam` the hyperbolicity prefactor
    (1 for the built-ins in eigen coordinates), `lip_f` an analytic Lipschitz
    bound of f for the phase metric.
    """

    sid: str
    kind: str
    lam_u: float
    lam_s: float
    C_lam: float = 1.0
    dim_u: int = 1
    dim_s: int = 1
    eps_p: float = 0.0
    pert_seed: int = 0
    depth: int = 0
    lip_f: float = 0.0
    lip_g: float = 0.0
    sup_g: float = 0.0
    _f: Optional[Callable] = field(default=None, repr=False)
    _f_many: Optional[Callable] = field(default=None, repr=False)
    _df: Optional[Callable] = field(default=None, repr=False)

    # -- dynamics ----------------------------------------------------------
    def f(self, x):
        return self._f(x)

    def f_many(self, X):
        if self._f_many is not None:
            return self._f_many(np.asarray(X, dtype=float))
        return np.array([self._f(x) for x in X])

    def df(self, x):
        if self._df is None:
            raise ValueError(f"system {self.sid!r} has no differential")
        return self._df(np.asarray(x, dtype=float))

    @property
    def is_linear_cat(self) -> bool:
        return self.kind == "torus" and self.eps_p == 0.0

    # -- metric ------------------------------------------------------------
    def dist(self, x, y):
        if self.kind == "torus":
            return float(torus_dist(x, y))
        return word_dist(x, y)

    def dist_many(self, X, Y):
        if self.kind == "torus":
            return torus_dist(X, Y)
        return np.array([word_dist(x, y) for x, y in zip(X, Y)])

    def diameter(self) -> float:
        if self.kind == "torus":
            return torus_covering_radius()
        return 1.0

    def covering_number(self, radius: float) -> int:
        """Number of radius-balls needed to cover the phase space (upper bound).

        On the torus this is the closed-form tiling count with axis squares
        inscribed in metric balls; on the shift it is the exact number of
        admissible prefix classes of the right length.
        """
        if radius <= 0:
            raise ValueError("radius must be positive")
        if self.kind == "torus":
            side = radius * math.sqrt(2.0)
            return int(math.ceil(1.0 / side)) ** 2
        if radius >= 1.0:
            return 1
        m = min(int(math.ceil(math.log2(1.0 / radius))), self.depth)
        return fibonacci_count(m)

    def points_sample(self, n: int, seed: int = 0):
        """Seeded sample of phase points (used by sampled verifications)."""
        rng = np.random.default_rng(seed)
        if self.kind == "torus":
            return rng.random((n, 2))
        words = admissible_words(self.depth)
        idx = rng.integers(0, len(words), size=n)
        return [words[i] for i in idx]


def cat_map() -> DynamicalSystem:
    """The toral automorphism x -> [[2,1],[1,1]] x mod 1."""

    def f(x):
        return mod1(np.asarray(x, dtype=float) @ A_CAT.T)

    def df(x):
        return A_CAT.copy()

    return DynamicalSystem(
        sid="cat", kind="torus",
        lam_u=math.log(LAM_U), lam_s=math.log(LAM_S), C_lam=1.0,
        lip_f=LAM_U,
        _f=f, _f_many=f, _df=df,
    )


_FREQ_POOL = np.array([[1, 0], [0, 1], [1, 1], [1, -1], [2, 1], [1, 2]])


def _make_perturbation(seed: int):
    """A fixed smooth periodic vector field g with sup ||g|| <= 1, from the seed.

    Each component is a 3-term trigonometric polynomial; the analytic
    derivative and the coefficient-sum bounds are returned with it.
    """
    rng = np.random.default_rng(seed)
    comps = []
    for _ in range(2):
        ks = _FREQ_POOL[rng.choice(len(_FREQ_POOL), size=3, replace=False)]
        cs = rng.normal(size=3)
        cs = cs / np.sum(np.abs(cs)) / math.sqrt(2.0)   # sup |g_i| <= 1/sqrt(2)
        th = rng.uniform(0.0, 2.0 * math.pi, size=3)
        comps.append((ks.astype(float), cs, th))

    def g_many(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty_like(X)
        for i, (ks, cs, th) in enumerate(comps):
            ph = 2.0 * math.pi * (X @ ks.T) + th
            out[:, i] = np.sin(ph) @ cs
        return out

    def dg(x):
        x = np.asarray(x, dtype=float)
        J = np.zeros((2, 2))
        for i, (ks, cs, th) in enumerate(comps):
            ph = 2.0 * math.pi * (ks @ x) + th
            J[i, :] = (2.0 * math.pi) * (cs * np.cos(ph)) @ ks
        return J

    sup_g = 1.0  # sqrt(sum_i (sum |c|)^2) = sqrt(1/2 + 1/2)
    # entrywise sup of the Jacobian, Frobenius bound, then the norm-equivalence
    # factor sqrt(2) to pass from the Euclidean to the eigen operator norm
    fro = math.sqrt(sum(
        float(np.sum(2.0 * math.pi * np.abs(cs) * np.abs(ks[:, j]))) ** 2
        for (ks, cs, th) in comps for j in range(2)))
    lip_g = math.sqrt(2.0) * fro
    return g_many, dg, sup_g, lip_g


def perturbed_cat_map(eps_p: float, seed: int) -> DynamicalSystem:
    """x -> A x + eps_p g(x) mod 1 with a seeded trigonometric field g."""
    if eps_p < 0:
        raise ValueError("perturbation size must be nonnegative")
    if eps_p == 0.0:
        base = cat_map()
        return DynamicalSystem(**{**base.__dict__, "sid": f"pcat:{eps_p:g}:{seed}"})
    g_many, dg, sup_g, lip_g = _make_perturbation(seed)

    def f_many(X):
        X = np.asarray(X, dtype=float)
        one = X.ndim == 1
        Xm = np.atleast_2d(X)
        out = mod1(Xm @ A_CAT.T + eps_p * g_many(Xm))
        return out[0] if one else out

    def df(x):
        return A_CAT + eps_p * dg(x)

    return DynamicalSystem(
        sid=f"pcat:{eps_p:g}:{seed}", kind="torus",
        lam_u=math.log(LAM_U), lam_s=math.log(LAM_S), C_lam=1.0,
        eps_p=eps_p, pert_seed=seed,
        lip_f=LAM_U + eps_p * lip_g, lip_g=lip_g, sup_g=sup_g,
        _f=f_many, _f_many=f_many, _df=df,
    )


def golden_mean_shift(depth: int) -> DynamicalSystem:
    """One-sided golden-mean shift on words of a fixed length.

    The left shift drops the head symbol and deterministically appends "0"
    (admissible after both symbols); the induced truncation error 2^(-depth)
    is folded into grid tolerances downstream.
    """
    if depth < 2:
        raise ValueError("depth must be at least 2")

    def f(w):
        return w[1:] + "0"

    return DynamicalSystem(
        sid=f"gms:{depth}", kind="shift",
        lam_u=math.log(2.0), lam_s=0.0, C_lam=1.0, depth=depth,
        lip_f=2.0,
        _f=f,
    )


def parse_system(sid: str) -> DynamicalSystem:
    """Resolve a system id: "cat", "pcat:<eps>:<seed>" or "gms:<depth>"."""
    parts = sid.split(":")
    if parts[0] == "cat" and len(parts) == 1:
        return cat_map()
    if parts[0] == "pcat" and len(parts) == 3:
        return perturbed_cat_map(float(parts[1]), int(parts[2]))
    if parts[0] == "gms" and len(parts) == 2:
        return golden_mean_shift(int(parts[1]))
    raise ValueError(f"unknown system id {sid!r}")


def fixed_point(system: DynamicalSystem, x0=(0.0, 0.0), tol: float = 1e-14):
    """Newton solve of f(x) = x on the torus, started at x0."""
    if system.kind != "torus":
        raise ValueError("fixed_point is for torus systems")
    x = mod1(np.asarray(x0, dtype=float))
    for _ in range(60):
        r = torus_reduce(system.f(x) - x)
        if float(torus_norm(r)) <= tol:
            return x
        J = system.df(x) - np.eye(2)
        x = mod1(x - np.linalg.solve(J, r))
    raise RuntimeError("fixed point iteration did not converge")


def preimage(system: DynamicalSystem, y, tol: float = 1e-14):
    """The point x with f(x) = y (torus maps of the cat family are bijective)."""
    if system.kind != "torus":
        raise ValueError("preimage is for torus systems")
    y = mod1(y)
    Ainv = np.linalg.inv(A_CAT)
    x = mod1(y @ Ainv.T)
    for _ in range(80):
        r = torus_reduce(system.f(x) - y)
        if float(torus_norm(r)) <= tol:
            return x
        x = mod1(x - r @ Ainv.T)
    raise RuntimeError("preimage iteration did not converge")


# ---------------------------------------------------------------------------
# observables

@dataclass(frozen=True)
class Observable:
    """A real observable with a certified Lipschitz constant for the phase metric."""

    name: str
    lip: float
    kind: str                       # which phase-space kind it lives on
    _fn: Callable = field(repr=False, default=None)
    _fn_many: Optional[Callable] = field(repr=False, default=None)
    table: Optional[tuple] = None   # edge costs for locally constant shift observables

    def __call__(self, x):
        return float(self._fn(x))

    def many(self, X):
        if self._fn_many is not None:
            return self._fn_many(X)
        return np.array([float(self._fn(x)) for x in X])


LIP_COSCOS = 2.0 * math.pi * (abs(EIG_U[0]) + abs(EIG_S[0]))


def _edge_index(a: str, b: str) -> int:
    return {"00": 0, "01": 1, "10": 2}[a + b]


def _edgecost_lip(table) -> float:
    w00, w01, w10 = table
    vals = {"00": w00, "01": w01, "10": w10}
    lip = 0.0
    pairs = ["00", "01", "10"]
    for p in pairs:
        for q in pairs:
            if p == q:
                continue
            if p[0] != q[0]:
                lip = max(lip, abs(vals[p] - vals[q]))          # mismatch at index 0
            elif p[1] != q[1]:
                lip = max(lip, 2.0 * abs(vals[p] - vals[q]))    # mismatch at index 1
    return lip


def observable_library(name: str, system: DynamicalSystem) -> Observable:
    """Catalogue of built-in observables.

    Names: "zero"; "coscos" (torus, 1 - cos(2 pi x1)); "dist2fix" and
    "dist2fix:<cx>,<cy>" (distance to a point, default the origin);
    "edgecost:default" or "edgecost:<w00>,<w01>,<w10>" (shift, locally
    constant in the first two symbols).
    """
    if name == "zero":
        return Observable("zero", 0.0, system.kind,
                          _fn=lambda x: 0.0,
                          _fn_many=lambda X: np.zeros(len(X)))
    if name == "coscos":
        if system.kind != "torus":
            raise ValueError("coscos is a torus observable")

        def fn_many(X):
            X = np.atleast_2d(np.asarray(X, dtype=float))
            return 1.0 - np.cos(2.0 * math.pi * X[:, 0])

        return Observable("coscos", LIP_COSCOS, "torus",
                          _fn=lambda x: 1.0 - math.cos(2.0 * math.pi * float(np.asarray(x)[0])),
                          _fn_many=fn_many)
    if name == "dist2fix" or name.startswith("dist2fix:"):
        if system.kind == "shift":
            if name != "dist2fix":
                raise ValueError("shifted centers are torus-only")
            zero = "0" * system.depth
            return Observable("dist2fix", 1.0, "shift", _fn=lambda w: word_dist(w, zero))
        if name == "dist2fix":
            c = np.zeros(2)
        else:
            cx, cy = name.split(":", 1)[1].split(",")
            c = np.array([float(cx), float(cy)]) % 1.0
        return Observable(name, 1.0, "torus",
                          _fn=lambda x: float(torus_dist(x, c)),
                          _fn_many=lambda X: torus_dist(np.atleast_2d(X), c))
    if name.startswith("edgecost"):
        if system.kind != "shift":
            raise ValueError("edgecost is a shift observable")
        spec = name.split(":", 1)[1] if ":" in name else "default"
        # the default table's minimizing cycle is the fixed word, which the
        # deterministic shift extension realizes exactly at every depth; the
        # dyadic costs keep the whole solve in exact float arithmetic
        table = (0.0, 0.5, 0.25) if spec == "default" else tuple(float(t) for t in spec.split(","))
        if len(table) != 3:
            raise ValueError("edgecost table needs three entries w00,w01,w10")

        def fn(w):
            return table[_edge_index(w[0], w[1])]

        return Observable(name, _edgecost_lip(table), "shift", _fn=fn, table=table)
    raise ValueError(f"unknown observable {name!r}")
