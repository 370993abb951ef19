"""Built-in Hamiltonian problems used by tests, diagnostics, and experiments."""

from __future__ import annotations

import numpy as np

from .core import HamiltonianProblem, maximally_degenerate


def harmonic_oscillator(n=1, omega=1.0):
    """H = (|p|^2 + omega^2 |q|^2) / 2."""
    w2 = omega**2
    return HamiltonianProblem(
        dim=n,
        H=lambda t, q, p: 0.5 * (np.dot(p, p) + w2 * np.dot(q, q)),
        D_qH=lambda t, q, p: w2 * np.asarray(q, dtype=float),
        D_pH=lambda t, q, p: np.asarray(p, dtype=float),
        D_ppH=lambda t, q, p: np.eye(n),
        D_tH=lambda t, q, p: 0.0,
        derivative_mode="analytic",
        name=f"oscillator(n={n}, omega={omega})",
    )


def free_particle(n=1):
    """H = |p|^2 / 2."""
    return HamiltonianProblem(
        dim=n,
        H=lambda t, q, p: 0.5 * np.dot(p, p),
        D_qH=lambda t, q, p: np.zeros(n),
        D_pH=lambda t, q, p: np.asarray(p, dtype=float),
        D_ppH=lambda t, q, p: np.eye(n),
        D_tH=lambda t, q, p: 0.0,
        derivative_mode="analytic",
        name="free-particle",
    )


def pendulum():
    """H = p^2/2 + cos q (one degree of freedom)."""
    return HamiltonianProblem(
        dim=1,
        H=lambda t, q, p: 0.5 * p[0] * p[0] + np.cos(q[0]),
        derivative_mode="dual",
        name="pendulum",
    )


def pure_force():
    """H = q: constant force, no kinetic term."""
    return HamiltonianProblem(
        dim=1,
        H=lambda t, q, p: q[0],
        derivative_mode="dual",
        name="pure-force",
    )


def zero_hamiltonian(n=1):
    return HamiltonianProblem(
        dim=n,
        H=lambda t, q, p: 0.0,
        D_qH=lambda t, q, p: np.zeros(n),
        D_pH=lambda t, q, p: np.zeros(n),
        D_ppH=lambda t, q, p: np.zeros((n, n)),
        derivative_mode="analytic",
        name="zero",
    )


def linear_drift(n=1):
    """H = <p, q>: maximally degenerate, flows q and p on decoupled exponentials."""
    return maximally_degenerate(
        f=lambda t, q: np.asarray(q, dtype=float),
        g=None,
        dim=n,
        D_qf=lambda t, q: np.eye(n),
        D_qg=lambda t, q: np.zeros(n),
        name="linear-drift",
    )


def degenerate_with_potential():
    """H = p q + q^2/2: maximally degenerate with a force term."""
    return maximally_degenerate(
        f=lambda t, q: np.asarray(q, dtype=float),
        g=lambda t, q: 0.5 * q[0] * q[0],
        dim=1,
        D_qf=lambda t, q: np.eye(1),
        D_qg=lambda t, q: np.asarray(q, dtype=float),
        name="degenerate-with-potential",
    )


def model_degenerate(f=None, fp=None, g=None, gp=None, omega=1.0):
    """Regular oscillator block plus a maximally degenerate block on q = (q_r, q_d).

    H = (p_r^2 + omega^2 q_r^2)/2 + p_d f(q_d) + g(q_d) with scalar blocks.
    ``fp``/``gp`` are the scalar derivatives of f and g; defaults are
    f(x) = x and g = 0.
    """
    if f is None:
        f, fp = (lambda x: x), (lambda x: 1.0)
    if g is None:
        g, gp = (lambda x: 0.0), (lambda x: 0.0)
    if fp is None or gp is None:
        raise ValueError("supply fp/gp alongside f/g")
    w2 = omega**2

    def H(t, q, p):
        return 0.5 * (p[0] * p[0] + w2 * q[0] * q[0]) + p[1] * f(q[1]) + g(q[1])

    def D_qH(t, q, p):
        return np.array([w2 * q[0], p[1] * fp(q[1]) + gp(q[1])])

    def D_pH(t, q, p):
        return np.array([p[0], f(q[1])])

    def D_ppH(t, q, p):
        return np.array([[1.0, 0.0], [0.0, 0.0]])

    return HamiltonianProblem(
        dim=2,
        H=H,
        D_qH=D_qH,
        D_pH=D_pH,
        D_ppH=D_ppH,
        D_tH=lambda t, q, p: 0.0,
        derivative_mode="analytic",
        name="model-degenerate",
    )


def central_force_2d(a=0.5, b=0.125):
    """Planar H = |p|^2/2 + V(|q|^2) with V(s) = a s + b s^2 (rotation invariant)."""

    def H(t, q, p):
        s = np.dot(q, q)
        return 0.5 * np.dot(p, p) + a * s + b * s * s

    def D_qH(t, q, p):
        s = np.dot(q, q)
        return (2.0 * a + 4.0 * b * s) * np.asarray(q, dtype=float)

    return HamiltonianProblem(
        dim=2,
        H=H,
        D_qH=D_qH,
        D_pH=lambda t, q, p: np.asarray(p, dtype=float),
        D_ppH=lambda t, q, p: np.eye(2),
        D_tH=lambda t, q, p: 0.0,
        derivative_mode="analytic",
        name="central-force-2d",
    )


def angular_momentum_2d(z):
    """J = q1 p2 - q2 p1 for a planar phase point."""
    return z.q[0] * z.p[1] - z.q[1] * z.p[0]


BUILTIN_PROBLEMS = {
    "oscillator": harmonic_oscillator,
    "free_particle": free_particle,
    "pendulum": pendulum,
    "pure_force": pure_force,
    "zero": zero_hamiltonian,
    "linear_drift": linear_drift,
    "degenerate_with_potential": degenerate_with_potential,
    "model_degenerate": model_degenerate,
    "central_force_2d": central_force_2d,
}
