"""Wave equations ``u_tt + a(t) H u + q(t) u = f`` with a non-self-adjoint
Schrödinger operator ``H = -Δ + V`` on a truncated interval."""

__version__ = "0.1.0"
