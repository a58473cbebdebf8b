"""Test functions on R^{Nd} with analytic derivatives.

All methods act on batches of configurations of shape (B, N, d). Coordinates
are indexed in the flattened, particle-major order p = i·d + k.
"""

# Standard lib imports
import logging
import math
from abc import ABCMeta, abstractmethod
from collections.abc import Mapping

# Third party imports
import numpy as np

# Local imports
from mflsi.errors import DomainError


# -----------------------------------------------------------------------------
# Local Constants
# -----------------------------------------------------------------------------
FD_STEP = 1e-3
FD_LAPLACIAN_STEP = 1e-2

logger = logging.getLogger(__name__)


def _flat(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x.reshape(x.shape[0], -1)


class TestFunction(metaclass=ABCMeta):
    """Smooth function f: R^{Nd} → R with gradient, Hessian and Laplacian."""

    __test__ = False
    name: str = "f"

    @abstractmethod
    def value(self, x: np.ndarray) -> np.ndarray:
        """f(x), shape (B,)."""
        raise NotImplementedError

    @abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray:
        """∇f(x), shape (B, N, d)."""
        raise NotImplementedError

    @abstractmethod
    def laplacian(self, x: np.ndarray) -> np.ndarray:
        """Δf(x), shape (B,)."""
        raise NotImplementedError

    @abstractmethod
    def hessian_sq(self, x: np.ndarray) -> np.ndarray:
        """Squared Frobenius norm of ∇²f(x), shape (B,)."""
        raise NotImplementedError

    @abstractmethod
    def hessian_form(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """vᵀ∇²f(x)v for directions v of shape (B, N, d), shape (B,)."""
        raise NotImplementedError

    @property
    def lipschitz(self) -> float:
        """Bound on |∇f|, ``math.inf`` when unbounded."""
        return math.inf

    def hessian(self, x: np.ndarray) -> np.ndarray:
        """Dense Hessian at one configuration of shape (N, d), shape (Nd, Nd)."""
        x = np.asarray(x, dtype=float)[None]
        size = x[0].size
        basis = np.eye(size)
        hess = np.empty((size, size))
        for p in range(size):
            for q in range(p, size):
                plus = (basis[p] + basis[q]).reshape(x.shape)
                minus = (basis[p] - basis[q]).reshape(x.shape)
                hess[p, q] = hess[q, p] = 0.25 * (self.hessian_form(x, plus)[0] - self.hessian_form(x, minus)[0])
        return hess

    def finite_difference_error(self, x: np.ndarray) -> tuple[float, float]:
        """Relative errors of the analytic gradient and Laplacian against finite differences.

        Central differences are Richardson-extrapolated over steps h and h/2.

        Args:
            x: configurations of shape (B, N, d)

        Returns:
            (gradient error, Laplacian error), each relative to max(1, magnitude)
        """
        flat = _flat(x)
        shape = np.shape(x)
        center = self.value(x)

        def shifted(p: int, h: float) -> tuple[np.ndarray, np.ndarray]:
            shift = np.zeros_like(flat)
            shift[:, p] = h
            return self.value((flat + shift).reshape(shape)), self.value((flat - shift).reshape(shape))

        def first(p: int, h: float) -> np.ndarray:
            plus, minus = shifted(p, h)
            return (plus - minus) / (2 * h)

        def second(p: int, h: float) -> np.ndarray:
            plus, minus = shifted(p, h)
            return (plus - 2 * center + minus) / h**2

        grad = np.column_stack([(4 * first(p, FD_STEP / 2) - first(p, FD_STEP)) / 3 for p in range(flat.shape[1])])
        lap = sum((4 * second(p, FD_LAPLACIAN_STEP / 2) - second(p, FD_LAPLACIAN_STEP)) / 3 for p in range(flat.shape[1]))
        analytic = _flat(self.gradient(x))
        grad_err = float(np.max(np.abs(analytic - grad)) / max(1.0, float(np.max(np.abs(analytic)))))
        exact_lap = self.laplacian(x)
        lap_err = float(np.max(np.abs(exact_lap - lap)) / max(1.0, float(np.max(np.abs(exact_lap)))))
        return grad_err, lap_err

    def __repr__(self) -> str:
        """Name of the function."""
        return f"{type(self).__name__}({self.name})"


# -----------------------------------------------------------------------------
# Polynomials
# -----------------------------------------------------------------------------
class PolynomialFunction(TestFunction):
    """Sparse polynomial Σ c_α x^α.

    Args:
        terms: map from monomial to coefficient; a monomial is a tuple of
            flattened coordinate indices with repetition, so ``(0, 0, 3)``
            stands for x₀²x₃ and ``()`` for the constant
        name: label used in reports
    """

    def __init__(self, terms: Mapping[tuple[int, ...], float], name: str = "poly"):
        """Initialize from the sparse term map."""
        self.terms: list[tuple[dict[int, int], float]] = []
        for monomial, coef in terms.items():
            if any(p < 0 for p in monomial):
                raise DomainError(f"negative coordinate index in monomial {monomial}")
            powers: dict[int, int] = {}
            for p in monomial:
                powers[p] = powers.get(p, 0) + 1
            self.terms.append((powers, float(coef)))
        self.support = sorted({p for powers, _ in self.terms for p in powers})
        self.name = name

    @classmethod
    def coordinate(cls, p: int) -> "PolynomialFunction":
        """x_p."""
        return cls({(p,): 1.0}, name=f"x{p}")

    @classmethod
    def linear(cls, weights: np.ndarray, name: str = "linear") -> "PolynomialFunction":
        """vᵀx for a flattened weight vector v."""
        weights = np.asarray(weights, dtype=float).reshape(-1)
        return cls({(p,): w for p, w in enumerate(weights) if w != 0.0}, name=name)

    @classmethod
    def monomial(cls, *coords: int) -> "PolynomialFunction":
        """Product of the given coordinates."""
        return cls({tuple(sorted(coords)): 1.0}, name="x" + "x".join(str(p) for p in sorted(coords)))

    @property
    def degree(self) -> int:
        """Total degree."""
        return max((sum(powers.values()) for powers, _ in self.terms), default=0)

    @property
    def lipschitz(self) -> float:
        """Finite only for affine polynomials."""
        if self.degree > 1:
            return math.inf
        grad = np.zeros(max(self.support, default=-1) + 1)
        for powers, coef in self.terms:
            for p in powers:
                grad[p] += coef
        return float(np.linalg.norm(grad))

    @staticmethod
    def _power_product(flat: np.ndarray, powers: dict[int, int]) -> np.ndarray:
        out = np.ones(flat.shape[0])
        for p, k in powers.items():
            if k:
                out = out * flat[:, p] ** k
        return out

    def _check(self, flat: np.ndarray) -> None:
        if self.support and self.support[-1] >= flat.shape[1]:
            raise DomainError(f"{self.name} uses coordinate {self.support[-1]} but configurations have {flat.shape[1]}")

    def value(self, x: np.ndarray) -> np.ndarray:
        """Polynomial value."""
        flat = _flat(x)
        self._check(flat)
        out = np.zeros(flat.shape[0])
        for powers, coef in self.terms:
            out += coef * self._power_product(flat, powers)
        return out

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Polynomial gradient."""
        flat = _flat(x)
        self._check(flat)
        grad = np.zeros_like(flat)
        for powers, coef in self.terms:
            for p, k in powers.items():
                reduced = {q: (j - 1 if q == p else j) for q, j in powers.items()}
                grad[:, p] += coef * k * self._power_product(flat, reduced)
        return grad.reshape(np.shape(x))

    def support_hessian(self, x: np.ndarray) -> np.ndarray:
        """Hessian restricted to the support coordinates, shape (B, S, S)."""
        flat = _flat(x)
        self._check(flat)
        index = {p: s for s, p in enumerate(self.support)}
        hess = np.zeros((flat.shape[0], len(self.support), len(self.support)))
        for powers, coef in self.terms:
            for p, k in powers.items():
                for q, j in powers.items():
                    if p == q:
                        if k < 2:
                            continue
                        reduced = {r: (m - 2 if r == p else m) for r, m in powers.items()}
                        factor = k * (k - 1)
                    else:
                        reduced = {r: (m - 1 if r in (p, q) else m) for r, m in powers.items()}
                        factor = k * j
                    hess[:, index[p], index[q]] += coef * factor * self._power_product(flat, reduced)
        return hess

    def laplacian(self, x: np.ndarray) -> np.ndarray:
        """Trace of the support Hessian."""
        return np.trace(self.support_hessian(x), axis1=1, axis2=2)

    def hessian_sq(self, x: np.ndarray) -> np.ndarray:
        """Squared Frobenius norm of the support Hessian."""
        return np.sum(self.support_hessian(x) ** 2, axis=(1, 2))

    def hessian_form(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """vᵀ∇²f v using only the support coordinates of v."""
        w = _flat(v)[:, self.support]
        return np.einsum("bs,bst,bt->b", w, self.support_hessian(x), w)


# -----------------------------------------------------------------------------
# Radial function
# -----------------------------------------------------------------------------
class RadialFunction(TestFunction):
    """f(x) = (1 + |x − c|²/s²)^{1/2}, smooth with |∇f| ≤ 1/s.

    Args:
        center: flattened center c (zero when omitted)
        scale: length scale s > 0
    """

    def __init__(self, center: np.ndarray | None = None, scale: float = 1.0, name: str = "radial"):
        """Initialize the radial function."""
        if not scale > 0:
            raise DomainError(f"scale must be positive, got {scale}")
        self.center = None if center is None else np.asarray(center, dtype=float).reshape(-1)
        self.scale = float(scale)
        self.name = name

    @property
    def lipschitz(self) -> float:
        """1/s."""
        return 1.0 / self.scale

    def _parts(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z = _flat(x) if self.center is None else _flat(x) - self.center
        return z, np.sqrt(1.0 + np.sum(z**2, axis=1) / self.scale**2)

    def value(self, x: np.ndarray) -> np.ndarray:
        """Radial value."""
        return self._parts(x)[1]

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """(x − c)/(s²f)."""
        z, f = self._parts(x)
        return (z / (self.scale**2 * f[:, None])).reshape(np.shape(x))

    def laplacian(self, x: np.ndarray) -> np.ndarray:
        """k/(s²f) − |z|²/(s⁴f³)."""
        z, f = self._parts(x)
        s2 = self.scale**2
        return z.shape[1] / (s2 * f) - np.sum(z**2, axis=1) / (s2**2 * f**3)

    def hessian_sq(self, x: np.ndarray) -> np.ndarray:
        """‖I/(s²f) − zzᵀ/(s⁴f³)‖²_F."""
        z, f = self._parts(x)
        s2 = self.scale**2
        r2 = np.sum(z**2, axis=1)
        a = 1.0 / (s2 * f)
        b = 1.0 / (s2**2 * f**3)
        return z.shape[1] * a**2 - 2 * a * b * r2 + b**2 * r2**2

    def hessian_form(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """|v|²/(s²f) − (z·v)²/(s⁴f³)."""
        z, f = self._parts(x)
        w = _flat(v)
        s2 = self.scale**2
        return np.sum(w**2, axis=1) / (s2 * f) - np.sum(z * w, axis=1) ** 2 / (s2**2 * f**3)


# -----------------------------------------------------------------------------
# Composition with a scalar function
# -----------------------------------------------------------------------------
class ComposedFunction(TestFunction):
    """g = ψ∘f for an outer ψ in {"tanh", "exp"}.

    ``tanh`` gives the smoothly clipped g = s·tanh(f/s), bounded by s with
    bounded derivatives whenever f has them. ``exp`` gives strictly positive
    functions for entropy inequalities.

    Args:
        inner: the function f
        outer: "tanh" or "exp"
        scale: clipping level s for ``tanh``
    """

    def __init__(self, inner: TestFunction, outer: str = "tanh", scale: float = 1.0):
        """Initialize the composition."""
        if outer not in ("tanh", "exp"):
            raise DomainError(f"unknown outer function {outer!r}")
        if not scale > 0:
            raise DomainError(f"scale must be positive, got {scale}")
        self.inner = inner
        self.outer = outer
        self.scale = float(scale)
        self.name = f"{outer}({inner.name})"

    @property
    def lipschitz(self) -> float:
        """Lipschitz constant of the inner function for ``tanh``, unbounded for ``exp``."""
        return self.inner.lipschitz if self.outer == "tanh" else math.inf

    def _psi(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """ψ(u), ψ′(u), ψ″(u)."""
        if self.outer == "exp":
            e = np.exp(u)
            return e, e, e
        t = np.tanh(u / self.scale)
        sech2 = 1.0 - t**2
        return self.scale * t, sech2, -2.0 * t * sech2 / self.scale

    def value(self, x: np.ndarray) -> np.ndarray:
        """ψ(f)."""
        return self._psi(self.inner.value(x))[0]

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """ψ′(f)∇f."""
        d1 = self._psi(self.inner.value(x))[1]
        return d1[:, None, None] * self.inner.gradient(x)

    def laplacian(self, x: np.ndarray) -> np.ndarray:
        """ψ″(f)|∇f|² + ψ′(f)Δf."""
        _, d1, d2 = self._psi(self.inner.value(x))
        grad = self.inner.gradient(x)
        return d2 * np.sum(grad**2, axis=(1, 2)) + d1 * self.inner.laplacian(x)

    def hessian_sq(self, x: np.ndarray) -> np.ndarray:
        """‖ψ″∇f∇fᵀ + ψ′∇²f‖²_F."""
        _, d1, d2 = self._psi(self.inner.value(x))
        grad = self.inner.gradient(x)
        g2 = np.sum(grad**2, axis=(1, 2))
        return d2**2 * g2**2 + 2 * d1 * d2 * self.inner.hessian_form(x, grad) + d1**2 * self.inner.hessian_sq(x)

    def hessian_form(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """ψ″(∇f·v)² + ψ′vᵀ∇²f v."""
        _, d1, d2 = self._psi(self.inner.value(x))
        grad = self.inner.gradient(x)
        return d2 * np.sum(grad * v, axis=(1, 2)) ** 2 + d1 * self.inner.hessian_form(x, v)


# -----------------------------------------------------------------------------
# Dictionaries
# -----------------------------------------------------------------------------
def coordinate_dictionary(n_particles: int, dim: int) -> list[TestFunction]:
    """All Nd coordinate functions."""
    return [PolynomialFunction.coordinate(p) for p in range(n_particles * dim)]


def default_dictionary(
    n_particles: int, dim: int, n_coordinates: int = 8, n_quadratic: int = 3, bounded: bool = False
) -> list[TestFunction]:
    """Coordinates, particle means, degree-2 monomials and one smooth radial function.

    Particle means are added only when the coordinates do not already span them.

    Args:
        n_particles: N
        dim: d
        n_coordinates: number of leading coordinates x_p included
        n_quadratic: monomials x_p·x_q are formed over this many leading coordinates
        bounded: wrap every function in a smooth tanh clipping

    Returns:
        The dictionary
    """
    size = n_particles * dim
    functions: list[TestFunction] = [PolynomialFunction.coordinate(p) for p in range(min(size, n_coordinates))]
    if 1 < n_particles and n_coordinates < size:
        for k in range(dim):
            weights = np.zeros((n_particles, dim))
            weights[:, k] = 1.0 / n_particles
            functions.append(PolynomialFunction.linear(weights, name=f"mean_x{k}"))
    top = min(size, n_quadratic)
    functions += [PolynomialFunction.monomial(p, q) for p in range(top) for q in range(p, top)]
    functions.append(RadialFunction(scale=math.sqrt(size)))
    if bounded:
        functions = [ComposedFunction(f, "tanh", scale=2.0) for f in functions]
    return functions
