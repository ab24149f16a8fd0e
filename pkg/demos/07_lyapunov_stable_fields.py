"""Learning a vector field that is stable by construction.

Any base network X_hat can be corrected into
X = X_hat - grad V * relu(grad V . X_hat + mu V) / ||grad V||^2
where V is a convex potential vanishing at the prescribed equilibrium.  The
correction removes exactly the outward component whenever X_hat would let V
grow slower than rate -mu V, so V is a Lyapunov function of the *learned*
field no matter what the data says.  Here we fit such a field to a damped
spiral and watch V decrease along integrated trajectories.
"""

import numpy as np

from stableflow import experiments

result = experiments.lyapunov_study(seed=0, n_samples=150, iterations=300,
                                    n_trajectories=20, traj_steps=800)
print(f"fit loss: {result.fit_losses[0]:.3f} -> {result.fit_losses[-1]:.3f} "
      f"over {len(result.fit_losses)} iterations")
print(f"equilibrium: {result.equilibrium}, "
      f"V there = {result.system.potential.value(result.equilibrium)}")

rows = np.asarray(result.v_series)
increases = []
for k in range(20):
    series = rows[rows[:, 0] == k][:, 2]
    increases.append(float(np.max(np.diff(series))))
print(f"largest per-step change of V over 20 trajectories x 800 Euler steps: "
      f"{max(increases):.2e}  (never above zero means monotone decrease)")

start_v = rows[rows[:, 1] == 0][:, 2]
end_v = rows[rows[:, 1] == rows[:, 1].max()][:, 2]
print(f"mean V at start {start_v.mean():.4f} -> at end {end_v.mean():.4f}")
