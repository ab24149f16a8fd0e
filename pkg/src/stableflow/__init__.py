"""Neural networks as discretised dynamical systems, with stability
guarantees enforced at train time: non-expansive gradient-flow blocks,
symplectic Hamiltonian blocks, and Lyapunov-stable vector fields."""

__version__ = "0.1.0"
