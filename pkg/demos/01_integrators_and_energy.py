"""Why structure-preserving integrators matter: the harmonic oscillator.

The true flow of (x, p)' = (p, -x) conserves the energy E = (x^2 + p^2)/2.
Explicit Euler multiplies it by (1 + h^2) every step, so the orbit spirals
outward no matter how small h is.  The symplectic Euler variant keeps the
energy trapped in a narrow band instead, because the update exactly
conserves the nearby quadratic x^2 + p^2 + h x p.
"""

import numpy as np

from stableflow import ode

field = ode.harmonic_oscillator()
h = 0.1

euler = ode.integrate(field, [1.0, 0.0], 0.0, h, 500, method="euler")
symplectic = ode.integrate(field, [1.0, 0.0], 0.0, h, 500, method="symplectic")

e_euler = ode.harmonic_energy(euler.states)
e_symp = ode.harmonic_energy(symplectic.states)

print(f"step size h = {h}, 500 steps, initial energy {e_euler[0]}")
print(f"explicit Euler final energy:   {e_euler[-1]:.6f}  "
      f"(the exact law 0.5*(1+h^2)^n gives {0.5 * (1 + h * h) ** 500:.6f})")
print(f"symplectic Euler energy range: [{e_symp.min():.6f}, {e_symp.max():.6f}]")
print(f"invariant band for this h:     [{1 / (2 + h):.6f}, {1 / (2 - h):.6f}]")

# the exact flow is a rotation; compare the endpoints
rotation = np.array([[0.0, 1.0], [-1.0, 0.0]])
exact = ode.exact_linear_flow(rotation, np.array([1.0, 0.0]), 500 * h)
print(f"\nexact endpoint {exact}, symplectic endpoint {symplectic.states[-1]}")
print(f"euler endpoint {euler.states[-1]}  <- magnitude has grown")

# convergence is first order for both: halving h halves the global error
for step in (0.1, 0.05, 0.025):
    n = round(1.0 / step)
    traj = ode.integrate(field, [1.0, 0.0], 0.0, step, n)
    truth = np.stack([np.cos(traj.times), -np.sin(traj.times)], axis=1)
    err = np.max(np.linalg.norm(traj.states - truth, axis=1))
    print(f"h = {step:<6} max error over [0, 1]: {err:.6f}")
