"""Network layers with explicit forward passes and hand-derived backward passes.

Every block maps row vectors (or stacks of rows) to row vectors and knows how
to pull an upstream gradient back to its input and parameters.  There is no
general autodiff here: each backward pass is written out per block kind.

Conventions: a weight of shape (H, d) acts on a d-vector as ``w @ x`` in
column form, i.e. ``x @ w.T`` on rows.  Parameter updates mutate the arrays
in place; callers must invalidate outstanding caches via
``Network.mark_params_updated`` afterwards.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import InvalidInputError, InvalidStateError


def relu(z):
    return np.maximum(z, 0.0)


def relu_prime(z):
    # subgradient 0 at the kink, matching sigma(0) = 0
    return (z > 0).astype(float)


def tanh_prime(z):
    t = np.tanh(z)
    return 1.0 - t * t


ACTIVATIONS = {"relu": (relu, relu_prime), "tanh": (np.tanh, tanh_prime)}


def uniform_init(rng, rows, cols):
    """i.i.d. uniform weights in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(cols)
    return rng.uniform(-bound, bound, size=(rows, cols))


def uniform_bias(rng, n, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=n)


def _rows(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim == 2:
        return x, False
    raise InvalidInputError(f"expected a vector or a stack of rows, got shape {x.shape}")


def _unrows(x, single):
    return x[0] if single else x


class NonExpansiveBlock:
    """Explicit Euler sub-steps of the gradient flow of a convex potential:
    x <- x - h * W^T relu(W x + b) with h = total_time / n_steps.

    The step is 1-Lipschitz whenever h <= 2 / ||W||_2^2, which
    ``update_step_count`` maintains from the running spectral estimate.
    ``norm_inflation`` pads the estimate because a single warm-started power
    iteration can lag the true norm during training.
    """

    kind = "nonexpansive"

    def __init__(self, weight, bias, total_time=1.0, norm_inflation=1.01,
                 spectral_iterations=100):
        self.weight = np.array(weight, dtype=float)
        self.bias = np.array(bias, dtype=float)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise InvalidInputError("weight must be (H, d) with an H-dimensional bias")
        if total_time <= 0:
            raise InvalidInputError(f"total_time must be positive, got {total_time}")
        self.total_time = float(total_time)
        self.norm_inflation = float(norm_inflation)
        self.spectral = None
        self.n_steps = 1
        self.refresh_spectral(spectral_iterations)
        self.update_step_count()

    @classmethod
    def random(cls, dim, hidden, rng, total_time=1.0, norm_inflation=1.01):
        return cls(uniform_init(rng, hidden, dim), uniform_bias(rng, hidden, dim),
                   total_time=total_time, norm_inflation=norm_inflation)

    @property
    def dim_in(self):
        return self.weight.shape[1]

    dim_out = dim_in

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def refresh_spectral(self, iterations=1):
        """Advance the power-method estimate; warm-starts from the last vector."""
        if self.spectral is None:
            u0 = linalg.counter_seeded_unit(self.weight.shape[1], 0)
        else:
            u0 = self.spectral.vector
        self.spectral = linalg.power_method(self.weight, u0, iterations)
        return self.spectral

    def update_step_count(self):
        """Smallest n with h = total_time/n satisfying h <= 2/||W||^2."""
        norm = self.norm_inflation * self.spectral.norm
        self.n_steps = max(1, int(np.ceil(self.total_time * norm * norm / 2.0)))
        return self.n_steps

    def forward(self, x):
        y, _ = self.forward_with_cache(x)
        return y

    def forward_with_cache(self, x):
        if self.n_steps < 1:
            raise InvalidStateError("block has no integration sub-steps")
        xs, single = _rows(x)
        h = self.total_time / self.n_steps
        steps = []
        for _ in range(self.n_steps):
            z = xs @ self.weight.T + self.bias
            steps.append((xs, z))
            xs = xs - h * relu(z) @ self.weight
        return _unrows(xs, single), {"steps": steps, "h": h, "single": single}

    def backward(self, cache, grad_out):
        g, _ = _rows(grad_out)
        h = cache["h"]
        gw = np.zeros_like(self.weight)
        gb = np.zeros_like(self.bias)
        for x_in, z in reversed(cache["steps"]):
            mask = z > 0
            r = np.where(mask, z, 0.0)
            mg = np.where(mask, g @ self.weight.T, 0.0)
            gw -= h * (r.T @ g + mg.T @ x_in)
            gb -= h * mg.sum(axis=0)
            g = g - h * mg @ self.weight
        return _unrows(g, cache["single"]), {"weight": gw, "bias": gb}

    def lipschitz_bound(self):
        return 1.0


class ResidualBlock:
    """Skip-connection layer x + h * B relu(A x + b); an explicit Euler step of
    a vector field whose flow is not non-expansive in general."""

    kind = "residual"

    def __init__(self, weight_in, weight_out, bias, h=1.0):
        self.weight_in = np.array(weight_in, dtype=float)    # (H, d)
        self.weight_out = np.array(weight_out, dtype=float)  # (d, H)
        self.bias = np.array(bias, dtype=float)
        d, hdim = self.weight_in.shape[1], self.weight_in.shape[0]
        if self.weight_out.shape != (d, hdim) or self.bias.shape != (hdim,):
            raise InvalidInputError("residual block shapes must be (H,d), (d,H), (H,)")
        if h <= 0:
            raise InvalidInputError(f"h must be positive, got {h}")
        self.h = float(h)

    @classmethod
    def random(cls, dim, hidden, rng, h=1.0):
        return cls(uniform_init(rng, hidden, dim), uniform_init(rng, dim, hidden),
                   uniform_bias(rng, hidden, dim), h=h)

    @property
    def dim_in(self):
        return self.weight_in.shape[1]

    dim_out = dim_in

    def params(self):
        return {"weight_in": self.weight_in, "weight_out": self.weight_out,
                "bias": self.bias}

    def forward(self, x):
        y, _ = self.forward_with_cache(x)
        return y

    def forward_with_cache(self, x):
        xs, single = _rows(x)
        z = xs @ self.weight_in.T + self.bias
        y = xs + self.h * relu(z) @ self.weight_out.T
        return _unrows(y, single), {"x": xs, "z": z, "single": single}

    def backward(self, cache, grad_out):
        g, _ = _rows(grad_out)
        z, xs = cache["z"], cache["x"]
        mask = z > 0
        r = np.where(mask, z, 0.0)
        mg = np.where(mask, g @ self.weight_out, 0.0)
        grads = {
            "weight_out": self.h * (g.T @ r),
            "weight_in": self.h * (mg.T @ xs),
            "bias": self.h * mg.sum(axis=0),
        }
        gx = g + self.h * mg @ self.weight_in
        return _unrows(gx, cache["single"]), grads

    def lipschitz_bound(self):
        return 1.0 + self.h * (linalg.spectral_norm_oracle(self.weight_out)
                               * linalg.spectral_norm_oracle(self.weight_in))


class MLPLayer:
    """Plain two-matrix perceptron layer B sigma(A x + b), no skip connection."""

    kind = "mlp"

    def __init__(self, weight_in, weight_out, bias, activation="tanh"):
        self.weight_in = np.array(weight_in, dtype=float)    # (H, d_in)
        self.weight_out = np.array(weight_out, dtype=float)  # (d_out, H)
        self.bias = np.array(bias, dtype=float)
        hdim = self.weight_in.shape[0]
        if self.weight_out.shape[1] != hdim or self.bias.shape != (hdim,):
            raise InvalidInputError("mlp layer shapes must be (H,d_in), (d_out,H), (H,)")
        if activation not in ACTIVATIONS:
            raise InvalidInputError(f"unknown activation {activation!r}")
        self.activation = activation

    @classmethod
    def random(cls, dim_in, dim_out, hidden, rng, activation="tanh"):
        return cls(uniform_init(rng, hidden, dim_in), uniform_init(rng, dim_out, hidden),
                   uniform_bias(rng, hidden, dim_in), activation=activation)

    @property
    def dim_in(self):
        return self.weight_in.shape[1]

    @property
    def dim_out(self):
        return self.weight_out.shape[0]

    def params(self):
        return {"weight_in": self.weight_in, "weight_out": self.weight_out,
                "bias": self.bias}

    def forward(self, x):
        y, _ = self.forward_with_cache(x)
        return y

    def forward_with_cache(self, x):
        act, _ = ACTIVATIONS[self.activation]
        xs, single = _rows(x)
        z = xs @ self.weight_in.T + self.bias
        y = act(z) @ self.weight_out.T
        return _unrows(y, single), {"x": xs, "z": z, "single": single}

    def backward(self, cache, grad_out):
        act, act_prime = ACTIVATIONS[self.activation]
        g, _ = _rows(grad_out)
        z, xs = cache["z"], cache["x"]
        mg = act_prime(z) * (g @ self.weight_out)
        grads = {
            "weight_out": g.T @ act(z),
            "weight_in": mg.T @ xs,
            "bias": mg.sum(axis=0),
        }
        return _unrows(mg @ self.weight_in, cache["single"]), grads

    def lipschitz_bound(self):
        return (linalg.spectral_norm_oracle(self.weight_out)
                * linalg.spectral_norm_oracle(self.weight_in))


class HamiltonianBlock:
    """One explicit symplectic Euler step of a separable parametrised
    Hamiltonian on states (q, p):

        q_hat = q + h * B^T sigma(B p + b)
        p_new = p - h * C^T sigma(C q_hat + c)

    The step is symplectic for every h, so its Jacobian J satisfies
    J^T S J = S (S the canonical skew form) and ||J||_2 >= 1: stacks of
    these blocks cannot attenuate gradients.
    """

    kind = "hamiltonian"

    def __init__(self, kin_weight, kin_bias, pot_weight, pot_bias, h,
                 activation="tanh"):
        self.kin_weight = np.array(kin_weight, dtype=float)  # (d, d), acts on p
        self.kin_bias = np.array(kin_bias, dtype=float)
        self.pot_weight = np.array(pot_weight, dtype=float)  # (d, d), acts on q_hat
        self.pot_bias = np.array(pot_bias, dtype=float)
        d = self.kin_weight.shape[1]
        for name, arr, shape in (("kin_weight", self.kin_weight, (d, d)),
                                 ("pot_weight", self.pot_weight, (d, d)),
                                 ("kin_bias", self.kin_bias, (d,)),
                                 ("pot_bias", self.pot_bias, (d,))):
            if arr.shape != shape:
                raise InvalidInputError(f"{name} must have shape {shape}, got {arr.shape}")
        if h <= 0:
            raise InvalidInputError(f"h must be positive, got {h}")
        if activation not in ACTIVATIONS:
            raise InvalidInputError(f"unknown activation {activation!r}")
        self.h = float(h)
        self.activation = activation

    @classmethod
    def random(cls, half_dim, rng, h=1.0, activation="tanh"):
        return cls(uniform_init(rng, half_dim, half_dim),
                   uniform_bias(rng, half_dim, half_dim),
                   uniform_init(rng, half_dim, half_dim),
                   uniform_bias(rng, half_dim, half_dim),
                   h=h, activation=activation)

    @property
    def dim_in(self):
        return 2 * self.kin_weight.shape[1]

    dim_out = dim_in

    def params(self):
        return {"kin_weight": self.kin_weight, "kin_bias": self.kin_bias,
                "pot_weight": self.pot_weight, "pot_bias": self.pot_bias}

    def forward(self, x):
        y, _ = self.forward_with_cache(x)
        return y

    def forward_with_cache(self, x):
        act, _ = ACTIVATIONS[self.activation]
        xs, single = _rows(x)
        if xs.shape[1] % 2 != 0:
            raise InvalidInputError(
                f"hamiltonian block needs an even input dimension, got {xs.shape[1]}")
        d = self.kin_weight.shape[1]
        if xs.shape[1] != 2 * d:
            raise InvalidInputError(f"expected dimension {2 * d}, got {xs.shape[1]}")
        q, p = xs[:, :d], xs[:, d:]
        z1 = p @ self.kin_weight.T + self.kin_bias
        q_hat = q + self.h * act(z1) @ self.kin_weight
        z2 = q_hat @ self.pot_weight.T + self.pot_bias
        p_new = p - self.h * act(z2) @ self.pot_weight
        y = np.concatenate([q_hat, p_new], axis=1)
        return _unrows(y, single), {"p": p, "q_hat": q_hat, "z1": z1, "z2": z2,
                                    "single": single}

    def backward(self, cache, grad_out):
        act, act_prime = ACTIVATIONS[self.activation]
        g, _ = _rows(grad_out)
        d = self.kin_weight.shape[1]
        v, u = g[:, :d], g[:, d:]  # upstream on (q_hat, p_new)
        p, q_hat, z1, z2 = cache["p"], cache["q_hat"], cache["z1"], cache["z2"]
        d1, d2 = act_prime(z1), act_prime(z2)
        # total gradient reaching q_hat: explicit part plus the p_new path
        cu = d2 * (u @ self.pot_weight.T)
        w = v - self.h * cu @ self.pot_weight
        bw = d1 * (w @ self.kin_weight.T)
        grads = {
            "pot_weight": -self.h * (act(z2).T @ u + cu.T @ q_hat),
            "pot_bias": -self.h * cu.sum(axis=0),
            "kin_weight": self.h * (act(z1).T @ w + bw.T @ p),
            "kin_bias": self.h * bw.sum(axis=0),
        }
        gq = w
        gp = u + self.h * bw @ self.kin_weight
        return _unrows(np.concatenate([gq, gp], axis=1), cache["single"]), grads

    def lipschitz_bound(self):
        bn = linalg.spectral_norm_oracle(self.kin_weight)
        cn = linalg.spectral_norm_oracle(self.pot_weight)
        return (1.0 + self.h * bn * bn) * (1.0 + self.h * cn * cn)


class LinearLayer:
    """Affine map W x + b."""

    kind = "linear"

    def __init__(self, weight, bias):
        self.weight = np.array(weight, dtype=float)
        self.bias = np.array(bias, dtype=float)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise InvalidInputError("weight must be (out, in) with an out-dimensional bias")

    @classmethod
    def random(cls, dim_in, dim_out, rng):
        return cls(uniform_init(rng, dim_out, dim_in), uniform_bias(rng, dim_out, dim_in))

    @property
    def dim_in(self):
        return self.weight.shape[1]

    @property
    def dim_out(self):
        return self.weight.shape[0]

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x):
        xs, single = _rows(x)
        return _unrows(xs @ self.weight.T + self.bias, single)

    def forward_with_cache(self, x):
        xs, single = _rows(x)
        return _unrows(xs @ self.weight.T + self.bias, single), {"x": xs, "single": single}

    def backward(self, cache, grad_out):
        g, _ = _rows(grad_out)
        grads = {"weight": g.T @ cache["x"], "bias": g.sum(axis=0)}
        return _unrows(g @ self.weight, cache["single"]), grads

    def lipschitz_bound(self, power_iterations=500):
        est = linalg.power_method(self.weight,
                                  linalg.counter_seeded_unit(self.weight.shape[1], 0),
                                  power_iterations)
        return est.norm


class LiftLayer:
    """Appends zeros to reach a higher dimension; exactly norm-preserving."""

    kind = "lift"

    def __init__(self, dim_in, dim_out):
        if dim_out < dim_in:
            raise InvalidInputError(f"lift cannot shrink: {dim_in} -> {dim_out}")
        self.dim_in = int(dim_in)
        self.dim_out = int(dim_out)

    def params(self):
        return {}

    def forward(self, x):
        xs, single = _rows(x)
        out = np.zeros((xs.shape[0], self.dim_out))
        out[:, :self.dim_in] = xs
        return _unrows(out, single)

    def forward_with_cache(self, x):
        xs, single = _rows(x)
        return self.forward(x), {"single": single}

    def backward(self, cache, grad_out):
        g, _ = _rows(grad_out)
        return _unrows(g[:, :self.dim_in].copy(), cache["single"]), {}

    def lipschitz_bound(self):
        return 1.0


class ProjectLayer:
    """Keeps the leading coordinates; non-expansive by construction."""

    kind = "project"

    def __init__(self, dim_in, dim_out):
        if dim_out > dim_in:
            raise InvalidInputError(f"projection cannot grow: {dim_in} -> {dim_out}")
        self.dim_in = int(dim_in)
        self.dim_out = int(dim_out)

    def params(self):
        return {}

    def forward(self, x):
        xs, single = _rows(x)
        return _unrows(xs[:, :self.dim_out].copy(), single)

    def forward_with_cache(self, x):
        xs, single = _rows(x)
        return self.forward(x), {"single": single}

    def backward(self, cache, grad_out):
        g, _ = _rows(grad_out)
        out = np.zeros((g.shape[0], self.dim_in))
        out[:, :self.dim_out] = g
        return _unrows(out, cache["single"]), {}

    def lipschitz_bound(self):
        return 1.0


class ClampedScale:
    """Learnable scalar multiplier whose effective value is clamped to
    [-bound, bound], capping the Lipschitz constant of the whole network."""

    kind = "scale"

    def __init__(self, dim, value=1.0, bound=1.0):
        if bound <= 0:
            raise InvalidInputError(f"bound must be positive, got {bound}")
        self.dim_in = int(dim)
        self.dim_out = int(dim)
        self.value = np.array([float(value)])
        self.bound = float(bound)

    def params(self):
        return {"value": self.value}

    def effective_scale(self):
        return float(np.clip(self.value[0], -self.bound, self.bound))

    def clamp(self):
        """Clamp the stored parameter in place (applied after optimiser steps)."""
        self.value[0] = self.effective_scale()

    def forward(self, x):
        xs, single = _rows(x)
        return _unrows(self.effective_scale() * xs, single)

    def forward_with_cache(self, x):
        xs, single = _rows(x)
        return self.forward(x), {"x": xs, "single": single}

    def backward(self, cache, grad_out):
        g, _ = _rows(grad_out)
        if abs(self.value[0]) <= self.bound:
            gv = float(np.sum(g * cache["x"]))
        else:
            gv = 0.0
        return _unrows(self.effective_scale() * g, cache["single"]), {"value": np.array([gv])}

    def lipschitz_bound(self):
        return abs(self.effective_scale())


@dataclass
class NetworkCache:
    version: int
    block_caches: list
    single: bool


class Network:
    """Ordered block composition with reverse-mode gradients.

    Parameter arrays are shared live with the optimiser; after mutating them
    call :meth:`mark_params_updated` so stale caches are rejected.
    """

    def __init__(self, blocks, lipschitz_budget=None):
        blocks = list(blocks)
        for left, right in zip(blocks, blocks[1:]):
            if left.dim_out != right.dim_in:
                raise InvalidInputError(
                    f"incompatible blocks: {left.kind} emits {left.dim_out}, "
                    f"{right.kind} expects {right.dim_in}")
        self.blocks = blocks
        self.lipschitz_budget = lipschitz_budget
        self._version = 0

    @property
    def dim_in(self):
        return self.blocks[0].dim_in

    @property
    def dim_out(self):
        return self.blocks[-1].dim_out

    def __len__(self):
        return len(self.blocks)

    def mark_params_updated(self):
        self._version += 1

    def parameters(self):
        """Live (block_index, name, array) triples in a stable order."""
        out = []
        for i, block in enumerate(self.blocks):
            for name, arr in block.params().items():
                out.append((i, name, arr))
        return out

    def nonexpansive_blocks(self):
        return [b for b in self.blocks if isinstance(b, NonExpansiveBlock)]

    def forward(self, x, start=0, stop=None):
        stop = len(self.blocks) if stop is None else stop
        for block in self.blocks[start:stop]:
            x = block.forward(x)
        return x

    def states(self, x):
        """All intermediate states: states[i] enters block i; states[-1] is the output."""
        out = [np.asarray(x, dtype=float)]
        for block in self.blocks:
            out.append(block.forward(out[-1]))
        return out

    def forward_with_cache(self, x, start=0, stop=None):
        stop = len(self.blocks) if stop is None else stop
        _, single = _rows(x)
        caches = []
        for block in self.blocks[start:stop]:
            x, cache = block.forward_with_cache(x)
            caches.append((block, cache))
        return x, NetworkCache(version=self._version, block_caches=caches, single=single)

    def backward(self, cache, grad_out):
        """Gradients of a scalar loss wrt the input and every parameter.

        Returns (input_gradient, grads) with grads[i] the dict for block i of
        the cached range (empty dict for parameter-free blocks).
        """
        if cache.version != self._version:
            raise InvalidStateError(
                "stale cache: parameters changed since the forward pass")
        grads = [None] * len(cache.block_caches)
        g = grad_out
        for i in range(len(cache.block_caches) - 1, -1, -1):
            block, block_cache = cache.block_caches[i]
            g, grads[i] = block.backward(block_cache, g)
        return g, grads


def jacobian_norm_probe(net, x, from_layer, to_layer, iterations=50,
                        fd_step=1e-7):
    """Spectral norm of d(state at to_layer) / d(state at from_layer) at the
    orbit of ``x``, by power iteration on J^T J.

    J v uses a forward difference of the sub-network; J^T u uses the exact
    hand-derived backward pass.
    """
    if not (0 <= from_layer <= to_layer <= len(net.blocks)):
        raise InvalidInputError(
            f"invalid layer range [{from_layer}, {to_layer}] for {len(net.blocks)} blocks")
    states = net.states(x)
    x_from = np.asarray(states[from_layer], dtype=float)
    if from_layer == to_layer:
        return 1.0
    f0 = net.forward(x_from, from_layer, to_layer)
    delta = fd_step * (1.0 + float(np.max(np.abs(x_from))))

    _, cache = net.forward_with_cache(x_from, from_layer, to_layer)

    def jv(v):
        return (net.forward(x_from + delta * v, from_layer, to_layer) - f0) / delta

    def jtu(u):
        g, _ = net.backward(cache, u)
        return g

    v = linalg.counter_seeded_unit(x_from.shape[0], 0)
    for _ in range(iterations):
        w = jtu(jv(v))
        wn = np.linalg.norm(w)
        if wn == 0.0:
            return 0.0
        v = w / wn
    return float(np.sqrt(np.linalg.norm(jtu(jv(v)))))


# --- checkpoints -----------------------------------------------------------
#
# A checkpoint directory holds manifest.txt plus one text file per parameter
# in the linalg matrix format.  The manifest lists one block per line:
#     <index> <kind> key=value ...

def save_network(net, directory):
    os.makedirs(directory, exist_ok=True)
    lines = [f"stableflow-network {len(net.blocks)}"]
    if net.lipschitz_budget is not None:
        lines.append(f"lipschitz_budget {linalg.format_entry(net.lipschitz_budget)}")
    for i, block in enumerate(net.blocks):
        attrs = [f"{i}", block.kind]
        if block.kind == "nonexpansive":
            attrs += [f"total_time={linalg.format_entry(block.total_time)}",
                      f"norm_inflation={linalg.format_entry(block.norm_inflation)}",
                      f"n_steps={block.n_steps}"]
        elif block.kind == "residual":
            attrs += [f"h={linalg.format_entry(block.h)}"]
        elif block.kind == "hamiltonian":
            attrs += [f"h={linalg.format_entry(block.h)}",
                      f"activation={block.activation}"]
        elif block.kind == "mlp":
            attrs += [f"activation={block.activation}"]
        elif block.kind in ("lift", "project"):
            attrs += [f"dim_in={block.dim_in}", f"dim_out={block.dim_out}"]
        elif block.kind == "scale":
            attrs += [f"dim={block.dim_in}", f"bound={linalg.format_entry(block.bound)}"]
        for name, arr in block.params().items():
            attrs.append(f"shape_{name}={'x'.join(str(s) for s in arr.shape)}")
        lines.append(" ".join(attrs))
        for name, arr in block.params().items():
            path = os.path.join(directory, f"block{i}_{name}.txt")
            if arr.ndim == 1:
                linalg.save_vector(path, arr)
            else:
                linalg.save_matrix(path, arr)
    with open(os.path.join(directory, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _block_param(directory, index, name, vector=False):
    path = os.path.join(directory, f"block{index}_{name}.txt")
    return linalg.load_vector(path) if vector else linalg.load_matrix(path)


def load_network(directory):
    with open(os.path.join(directory, "manifest.txt")) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    head = lines[0].split()
    if head[0] != "stableflow-network":
        raise InvalidInputError(f"{directory}: not a network checkpoint")
    budget = None
    body = lines[1:]
    if body and body[0].startswith("lipschitz_budget"):
        budget = float(body[0].split()[1])
        body = body[1:]
    blocks = []
    for line in body:
        parts = line.split()
        index, kind = int(parts[0]), parts[1]
        attrs = dict(p.split("=", 1) for p in parts[2:])
        if kind == "nonexpansive":
            block = NonExpansiveBlock(
                _block_param(directory, index, "weight"),
                _block_param(directory, index, "bias", vector=True),
                total_time=float(attrs["total_time"]),
                norm_inflation=float(attrs["norm_inflation"]),
                spectral_iterations=500)
            block.n_steps = int(attrs["n_steps"])
        elif kind == "residual":
            block = ResidualBlock(
                _block_param(directory, index, "weight_in"),
                _block_param(directory, index, "weight_out"),
                _block_param(directory, index, "bias", vector=True),
                h=float(attrs["h"]))
        elif kind == "hamiltonian":
            block = HamiltonianBlock(
                _block_param(directory, index, "kin_weight"),
                _block_param(directory, index, "kin_bias", vector=True),
                _block_param(directory, index, "pot_weight"),
                _block_param(directory, index, "pot_bias", vector=True),
                h=float(attrs["h"]), activation=attrs["activation"])
        elif kind == "mlp":
            block = MLPLayer(
                _block_param(directory, index, "weight_in"),
                _block_param(directory, index, "weight_out"),
                _block_param(directory, index, "bias", vector=True),
                activation=attrs["activation"])
        elif kind == "linear":
            block = LinearLayer(
                _block_param(directory, index, "weight"),
                _block_param(directory, index, "bias", vector=True))
        elif kind == "lift":
            block = LiftLayer(int(attrs["dim_in"]), int(attrs["dim_out"]))
        elif kind == "project":
            block = ProjectLayer(int(attrs["dim_in"]), int(attrs["dim_out"]))
        elif kind == "scale":
            block = ClampedScale(int(attrs["dim"]), bound=float(attrs["bound"]))
            block.value[:] = _block_param(directory, index, "value", vector=True)
        else:
            raise InvalidInputError(f"unknown block kind {kind!r} in checkpoint")
        blocks.append(block)
    return Network(blocks, lipschitz_budget=budget)
