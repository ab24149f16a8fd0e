"""Certification and stability analysis.

Composed Lipschitz bounds, classification margins and certified radii,
one-sided Lipschitz estimation of vector fields, and a Lyapunov-stable
vector-field parametrisation with a guaranteed decrease direction.
"""

from dataclasses import dataclass

import numpy as np

from . import linalg
from .blocks import relu
from .errors import DegenerateGradientError, InvalidInputError
from .linalg import format_entry


def margin(logits):
    """(argmax class, top minus runner-up).  Ties resolve to the lowest index."""
    logits = np.asarray(logits, dtype=float)
    if logits.ndim != 1 or logits.shape[0] < 2:
        raise InvalidInputError(f"need at least 2 logits, got shape {logits.shape}")
    cls = int(np.argmax(logits))
    rest = np.delete(logits, cls)
    return cls, float(logits[cls] - np.max(rest))


@dataclass
class Certificate:
    """A robustness certificate: every point within ``radius`` of ``input``
    receives the same predicted class, provided ``lipschitz_bound`` really
    bounds the network's Lipschitz constant."""

    input: np.ndarray
    predicted_class: int
    margin: float
    lipschitz_bound: float
    radius: float


def certified_radius(net, x, lipschitz_bound):
    """Certificate with radius margin(x) / (2 * lipschitz_bound)."""
    if lipschitz_bound <= 0:
        raise InvalidInputError(f"Lipschitz bound must be positive, got {lipschitz_bound}")
    x = np.asarray(x, dtype=float)
    cls, m = margin(net.forward(x))
    return Certificate(input=x, predicted_class=cls, margin=m,
                       lipschitz_bound=float(lipschitz_bound),
                       radius=m / (2.0 * lipschitz_bound))


def certificates_to_csv(path, certificates):
    with open(path, "w") as fh:
        fh.write("index,class,margin,lipschitz_bound,radius\n")
        for i, c in enumerate(certificates):
            fh.write(f"{i},{c.predicted_class},{format_entry(c.margin)},"
                     f"{format_entry(c.lipschitz_bound)},{format_entry(c.radius)}\n")


def composed_lipschitz_bound(net):
    """Product of per-block Lipschitz bounds; an upper bound on the network's
    Lipschitz constant, typically far from tight."""
    bound = 1.0
    for block in net.blocks:
        bound *= block.lipschitz_bound()
    return float(bound)


def _fd_jacobian(func, x, step=1e-5):
    """Central-difference Jacobian of a vector map."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(func(x), dtype=float)
    jac = np.empty((f0.shape[0], x.shape[0]))
    for j in range(x.shape[0]):
        e = np.zeros_like(x)
        e[j] = step
        jac[:, j] = (np.asarray(func(x + e)) - np.asarray(func(x - e))) / (2.0 * step)
    return jac


def one_sided_lipschitz_estimate(field, samples, fd_step=1e-5):
    """Largest eigenvalue of the symmetrised Jacobian of ``field`` over the
    samples; an empirical lower bound on the one-sided Lipschitz constant."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    best = -np.inf
    for x in samples:
        jac = _fd_jacobian(lambda v: field.eval(0.0, v), x, step=fd_step)
        sym = 0.5 * (jac + jac.T)
        eigenvalues = linalg.jacobi_eigenvalues(sym)
        best = max(best, float(eigenvalues[-1]))
    return best


class ConvexPotential:
    """Convex potential with a prescribed minimum at ``center``:

        V(x) = eps * ||x - center||^2 + sum_i gamma(w_i . (x - center))

    where gamma(s) = s^2/2 for s > 0 and 0 otherwise (so gamma' = relu).
    Convex by construction, V(center) = 0, grad V(center) = 0, and the
    gradient is exact and cheap.
    """

    def __init__(self, weights, center, eps=1e-3):
        self.weights = np.array(weights, dtype=float)  # (H, d)
        self.center = np.array(center, dtype=float)
        if self.weights.ndim != 2 or self.weights.shape[1] != self.center.shape[0]:
            raise InvalidInputError("weights must be (H, d) matching the center dimension")
        self.eps = float(eps)

    def value(self, x):
        u = np.asarray(x, dtype=float) - self.center
        z = self.weights @ u
        return float(self.eps * np.dot(u, u) + 0.5 * np.sum(relu(z) ** 2))

    def grad(self, x):
        u = np.asarray(x, dtype=float) - self.center
        z = self.weights @ u
        return 2.0 * self.eps * u + self.weights.T @ relu(z)


@dataclass
class LyapunovSystem:
    """A base vector field projected so the potential decreases along flows.

    ``base_field`` is any map x -> dx (e.g. a small network);
    ``potential`` is the convex Lyapunov candidate with its minimum at the
    prescribed equilibrium; ``mu`` sets the enforced decrease rate.
    """

    base_field: object  # callable x -> vector
    potential: ConvexPotential
    mu: float

    # below this squared-gradient size the projection formula is singular
    degenerate_tol: float = 1e-12
    equilibrium_tol: float = 1e-9

    @property
    def equilibrium(self):
        return self.potential.center


def lyapunov_project(system, x):
    """The projected field  X(x) = Xhat(x) - grad V(x) * relu(grad V . Xhat + mu V) / ||grad V||^2,
    which satisfies <grad V, X> <= -mu V <= 0 wherever defined."""
    x = np.asarray(x, dtype=float)
    xhat = np.asarray(system.base_field(x), dtype=float)
    g = system.potential.grad(x)
    gg = float(np.dot(g, g))
    if gg < system.degenerate_tol:
        if np.linalg.norm(x - system.equilibrium) <= system.equilibrium_tol:
            return xhat
        raise DegenerateGradientError(
            "potential gradient vanished away from the equilibrium")
    active = float(np.dot(g, xhat)) + system.mu * system.potential.value(x)
    if active <= 0.0:
        return xhat
    return xhat - g * (active / gg)


def lyapunov_field(system):
    """The projected system as an autonomous :class:`~stableflow.ode.VectorField`."""
    from .ode import VectorField

    return VectorField(dimension=system.equilibrium.shape[0],
                       eval=lambda t, x: lyapunov_project(system, x))


def lyapunov_project_vjp(system, x, upstream):
    """Pull an upstream gradient on the projected field back to the base-field
    output and the potential weights.

    Returns (base_upstream, weight_grad): ``base_upstream`` is the gradient to
    feed into the base field's own backward pass, ``weight_grad`` matches
    ``system.potential.weights``.  Used when fitting the projected field to
    data; the relu switch is treated as locally constant.
    """
    x = np.asarray(x, dtype=float)
    e = np.asarray(upstream, dtype=float)
    pot = system.potential
    xhat = np.asarray(system.base_field(x), dtype=float)
    g = pot.grad(x)
    gg = float(np.dot(g, g))
    if gg < system.degenerate_tol:
        return e.copy(), np.zeros_like(pot.weights)
    vval = pot.value(x)
    s = float(np.dot(g, xhat)) + system.mu * vval
    if s <= 0.0:
        return e.copy(), np.zeros_like(pot.weights)
    a = s  # relu(s) in the active branch
    eg = float(np.dot(e, g))
    # gradient to the base-field output: dX/dXhat = I - g g^T / gg
    base_upstream = e - g * (eg / gg)
    # gradient reaching grad-V and V through the correction term
    v_g = -((eg / gg) * xhat + (a / gg) * e - (2.0 * a * eg / gg ** 2) * g)
    c_v = -(eg / gg) * system.mu
    u = x - pot.center
    z = pot.weights @ u
    sig = relu(z)
    gate = (z > 0).astype(float)
    # grad V = 2 eps u + W^T relu(W u):  d(grad V)/dW pulled back by v_g,
    # plus dV/dW scaled by c_v
    weight_grad = (np.outer(sig, v_g) + np.outer(gate * (pot.weights @ v_g), u)
                   + c_v * np.outer(sig, u))
    return base_upstream, weight_grad
