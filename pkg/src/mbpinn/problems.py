"""Benchmark elliptic problems with closed-form solutions.

All field evaluators are vectorized: points are arrays of shape (N, d) and
values come back with shape (N,).
"""

from __future__ import annotations

import numpy as np

PI = np.pi
SOLUTION, FORCE, BOUNDARY, COEFFICIENT = "solution", "force", "boundary", "coefficient"
FIELDS = (SOLUTION, FORCE, BOUNDARY, COEFFICIENT)


class BoundaryError(ValueError):
    """A point passed as a boundary point does not lie on the boundary."""


class PdeProblem:
    """Base class: box domain, exact fields and the residual operator.

    Subclasses implement ``exact_solution``, ``exact_derivatives`` (first
    and pure second derivatives of the exact solution), ``force`` and
    ``operator``. ``operator`` is written with plain arithmetic so the same
    code runs on numpy arrays (exact fields) and on autodiff tensors
    (network jets).
    """

    id: str = ""
    lower: tuple = (0.0,)
    upper: tuple = (1.0,)
    unknowns: tuple = ("u",)
    observed_fields: tuple = (SOLUTION, FORCE)
    epsilon = None

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.lower, dtype=float), np.array(self.upper, dtype=float)

    def _pts(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64).reshape(-1, self.dim)

    def on_boundary(self, x, tol: float = 1e-12) -> np.ndarray:
        x = self._pts(x)
        lo, hi = self.bounds
        inside = np.all((x >= lo - tol) & (x <= hi + tol), axis=1)
        touching = np.any((np.abs(x - lo) <= tol) | (np.abs(x - hi) <= tol), axis=1)
        return inside & touching

    def boundary_value(self, x) -> np.ndarray:
        x = self._pts(x)
        if not np.all(self.on_boundary(x)):
            raise BoundaryError(f"{self.id}: point(s) not on the domain boundary")
        return self.boundary_target(x)

    def boundary_target(self, x) -> np.ndarray:
        return self.exact_solution(x)

    def coefficient(self, x) -> np.ndarray:
        raise NotImplementedError(f"{self.id} has no coefficient field")

    def coefficient_grad(self, x) -> np.ndarray:
        raise NotImplementedError(f"{self.id} has no coefficient gradient")

    def field(self, name: str, x) -> np.ndarray:
        if name == SOLUTION:
            return self.exact_solution(x)
        if name == FORCE:
            return self.force(x)
        if name == BOUNDARY:
            return self.boundary_value(x)
        if name == COEFFICIENT:
            return self.coefficient(x)
        raise ValueError(f"unknown field {name!r}")

    def residual(self, x, u, k=None):
        """Apply the differential operator.

        ``u`` is a jet (anything with ``value``, ``d1``, ``d2``) for the
        solution; ``k`` is the coefficient value for problems that carry an
        unknown coefficient. Returns an (N, 1)-shaped result.
        """
        return self.operator(self._pts(x), u.value, u.d1, u.d2, k)

    def exact_residual(self, x) -> np.ndarray:
        """Operator applied to the closed-form solution via its analytic derivatives."""
        x = self._pts(x)
        d1, d2 = self.exact_derivatives(x)
        k = _col(self.coefficient(x)) if "k" in self.unknowns else None
        cols = range(self.dim)
        out = self.operator(x, _col(self.exact_solution(x)), [d1[:, [i]] for i in cols],
                            [d2[:, [i]] for i in cols], k)
        return np.asarray(out).reshape(-1)


def _col(a):
    return np.asarray(a).reshape(-1, 1)


class MultiscaleElliptic1D(PdeProblem):
    """-(A u')' = 1 on [0, 1], A = 1/(2 + cos(2 pi x / eps)), u(0) = u(1) = 0."""

    id = "P1_multiscale1d"

    def __init__(self, epsilon: float = 0.1):
        if not epsilon > 0:
            raise ValueError("epsilon must be positive")
        inv = 1.0 / epsilon
        if abs(inv - round(inv)) > 1e-9:
            raise ValueError("1/epsilon must be an integer for homogeneous boundary values")
        self.epsilon = float(epsilon)

    def _phase(self, x):
        return 2 * PI * x[:, 0] / self.epsilon

    def exact_solution(self, x):
        x = self._pts(x)
        t, e = x[:, 0], self.epsilon
        s, c = np.sin(self._phase(x)), np.cos(self._phase(x))
        return (t - t**2 + e * (s / (4 * PI) - t * s / (2 * PI)
                                - e * c / (4 * PI**2) + e / (4 * PI**2)))

    def exact_derivatives(self, x):
        x = self._pts(x)
        t, k = x[:, 0], 2 * PI / self.epsilon
        s, c = np.sin(self._phase(x)), np.cos(self._phase(x))
        du = (1 - 2 * t) * (1 + c / 2)
        d2u = -(2 + c) - (1 - 2 * t) * k * s / 2
        return du[:, None], d2u[:, None]

    def coefficient(self, x):
        return 1.0 / (2.0 + np.cos(self._phase(self._pts(x))))

    def coefficient_grad(self, x):
        x = self._pts(x)
        k = 2 * PI / self.epsilon
        ph = self._phase(x)
        return (k * np.sin(ph) / (2.0 + np.cos(ph)) ** 2)[:, None]

    def force(self, x):
        return np.ones(len(self._pts(x)))

    def operator(self, x, u, d1, d2, k=None):
        a, da = _col(self.coefficient(x)), _col(self.coefficient_grad(x)[:, 0])
        return -(da * d1[0] + a * d2[0])


class NonlinearPoisson1D(PdeProblem):
    """0.01 u'' + k u = f on [0, 1] with unknown coefficient k, u(0) = u(1) = 0.1."""

    id = "P2_nonlinear_poisson1d"
    unknowns = ("u", "k")
    observed_fields = (SOLUTION, FORCE, COEFFICIENT)

    def exact_solution(self, x):
        t = self._pts(x)[:, 0]
        return np.sin(2 * PI * t) + 0.1 * np.cos(10 * PI * t)

    def exact_derivatives(self, x):
        t = self._pts(x)[:, 0]
        du = 2 * PI * np.cos(2 * PI * t) - PI * np.sin(10 * PI * t)
        d2u = -4 * PI**2 * np.sin(2 * PI * t) - 10 * PI**2 * np.cos(10 * PI * t)
        return du[:, None], d2u[:, None]

    def coefficient(self, x):
        t = self._pts(x)[:, 0]
        return 0.1 + np.exp(-0.5 * (t - 0.5) ** 2 / 0.15**2)

    def force(self, x):
        x = self._pts(x)
        t = x[:, 0]
        return (0.01 * (-4 * PI**2 * np.sin(2 * PI * t) - 10 * PI**2 * np.cos(10 * PI * t))
                + self.coefficient(x) * self.exact_solution(x))

    def operator(self, x, u, d1, d2, k=None):
        if k is None:
            raise ValueError("the nonlinear Poisson operator needs the coefficient k")
        return 0.01 * d2[0] + k * u


class MultiscaleElliptic2D(PdeProblem):
    """-div(A grad u) = -(x1^2 + x2^2) on [0, 1]^2, A = 1/(4 + cos(2 pi r / eps))."""

    id = "P3_multiscale2d"
    lower, upper = (0.0, 0.0), (1.0, 1.0)
    observed_fields = (SOLUTION, BOUNDARY, FORCE)

    def __init__(self, epsilon: float = 0.5):
        if not epsilon > 0:
            raise ValueError("epsilon must be positive")
        self.epsilon = float(epsilon)

    def _r(self, x):
        return x[:, 0] ** 2 + x[:, 1] ** 2

    def exact_solution(self, x):
        x = self._pts(x)
        r, e = self._r(x), self.epsilon
        ph = 2 * PI * r / e
        return r**2 / 4 + e / (16 * PI) * r * np.sin(ph) + e**2 / (32 * PI**2) * np.cos(ph)

    def exact_derivatives(self, x):
        # u = U(r), r = x1^2 + x2^2: u_i = 2 x_i U', u_ii = 4 x_i^2 U'' + 2 U'
        x = self._pts(x)
        r, k = self._r(x), 2 * PI / self.epsilon
        s, c = np.sin(k * r), np.cos(k * r)
        du_dr = r * (4 + c) / 8
        d2u_dr2 = (4 + c) / 8 - r * k * s / 8
        d1 = 2 * x * du_dr[:, None]
        d2 = 4 * x**2 * d2u_dr2[:, None] + 2 * du_dr[:, None]
        return d1, d2

    def coefficient(self, x):
        return 1.0 / (4.0 + np.cos(2 * PI * self._r(self._pts(x)) / self.epsilon))

    def coefficient_grad(self, x):
        x = self._pts(x)
        k = 2 * PI / self.epsilon
        ph = k * self._r(x)
        da_dr = k * np.sin(ph) / (4.0 + np.cos(ph)) ** 2
        return 2 * x * da_dr[:, None]

    def force(self, x):
        return -self._r(self._pts(x))

    def operator(self, x, u, d1, d2, k=None):
        a = _col(self.coefficient(x))
        ga = self.coefficient_grad(x)
        return -(_col(ga[:, 0]) * d1[0] + a * d2[0] + _col(ga[:, 1]) * d1[1] + a * d2[1])


class Poisson2D(PdeProblem):
    """Laplace(u) = f on [-1, 1]^2 with u = exp(sin(pi x1)) exp(sin(pi x2))."""

    id = "P4_poisson2d"
    lower, upper = (-1.0, -1.0), (1.0, 1.0)
    observed_fields = (SOLUTION, BOUNDARY, FORCE)

    def exact_solution(self, x):
        x = self._pts(x)
        return np.exp(np.sin(PI * x[:, 0])) * np.exp(np.sin(PI * x[:, 1]))

    def exact_derivatives(self, x):
        x = self._pts(x)
        u = self.exact_solution(x)[:, None]
        d1 = PI * np.cos(PI * x) * u
        d2 = PI**2 * (np.cos(PI * x) ** 2 - np.sin(PI * x)) * u
        return d1, d2

    def force(self, x):
        x = self._pts(x)
        u = self.exact_solution(x)
        s1, s2 = np.sin(PI * x[:, 0]), np.sin(PI * x[:, 1])
        c1, c2 = np.cos(PI * x[:, 0]), np.cos(PI * x[:, 1])
        return PI**2 * u * (c1**2 - s1 + c2**2 - s2)

    def operator(self, x, u, d1, d2, k=None):
        return d2[0] + d2[1]


PROBLEMS = {
    "P1": MultiscaleElliptic1D,
    "P2": NonlinearPoisson1D,
    "P3": MultiscaleElliptic2D,
    "P4": Poisson2D,
}


def make_problem(pid: str, epsilon: float | None = None) -> PdeProblem:
    """Build a problem from a short (``P1``) or long (``P1_multiscale1d``) id."""
    key = pid.split("_")[0].upper()
    if key not in PROBLEMS:
        raise ValueError(f"unknown problem {pid!r}")
    cls = PROBLEMS[key]
    if key in ("P1", "P3"):
        return cls() if epsilon is None else cls(epsilon)
    return cls()


def exact_solution(problem: PdeProblem, x) -> np.ndarray:
    return problem.exact_solution(x)


def coefficient(problem: PdeProblem, x, with_grad: bool = False):
    if with_grad:
        return problem.coefficient(x), problem.coefficient_grad(x)
    return problem.coefficient(x)


def force(problem: PdeProblem, x) -> np.ndarray:
    return problem.force(x)


def boundary_value(problem: PdeProblem, x) -> np.ndarray:
    return problem.boundary_value(x)
