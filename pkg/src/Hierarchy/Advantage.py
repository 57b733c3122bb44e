from dataclasses import dataclass

import numpy as np

from src.ExactSolver.ExactSolver import switching_advantage_template
from src.FB.FbModel import FbModel, f_value

DEGENERATE_TOL = 1e-8


class DegenerateSubgoalError(ArithmeticError):
    """
    Raised when F(w, z_w)^T z_w is too close to zero to act as a hitting-discount denominator.
    """


@dataclass(frozen=True)
class FbTerms:
    """
    The six inner products the switching advantage is assembled from, one entry per (s, w, z) row.
    Names read <state>_<latent fed to F>_<latent dotted with>.
    """
    s_zw_z: np.ndarray
    s_zw_zw: np.ndarray
    w_zw_zw: np.ndarray
    w_z_z: np.ndarray
    w_zw_z: np.ndarray
    s_z_z: np.ndarray

    @property
    def ratio(self) -> np.ndarray:
        return self.s_zw_zw / self.w_zw_zw

    @property
    def degenerate(self) -> np.ndarray:
        return np.abs(self.w_zw_zw) < DEGENERATE_TOL


def _broadcast(model: FbModel, s, w, z):
    s = np.atleast_1d(np.asarray(s, dtype=np.int64))
    w = np.atleast_1d(np.asarray(w, dtype=np.int64))
    z = np.asarray(z, dtype=np.float64)
    n = max(s.size, w.size, z.shape[0] if z.ndim == 2 else 1)
    return (np.broadcast_to(s, (n,)), np.broadcast_to(w, (n,)),
            np.broadcast_to(z if z.ndim == 2 else z[None, :], (n, model.d)))


def fb_terms(model: FbModel, s, w, z) -> FbTerms:
    """
    Evaluate F at s and at w in separate, identically shaped calls so that rows with s = w
    produce bit-identical terms.
    """
    s, w, z = _broadcast(model, s, w, z)
    z_w = model.subgoal_latent(w)
    f_s_zw = f_value(model, s, z_w)
    f_w_zw = f_value(model, w, z_w)
    f_s_z = f_value(model, s, z)
    f_w_z = f_value(model, w, z)

    def dot(a, b):
        return np.sum(a * b, axis=1)

    return FbTerms(s_zw_z=dot(f_s_zw, z), s_zw_zw=dot(f_s_zw, z_w), w_zw_zw=dot(f_w_zw, z_w),
                   w_z_z=dot(f_w_z, z), w_zw_z=dot(f_w_zw, z), s_z_z=dot(f_s_z, z))


def _guard(terms: FbTerms, values: np.ndarray, on_degenerate: str) -> np.ndarray:
    degenerate = terms.degenerate
    if np.any(degenerate):
        if on_degenerate == "raise":
            raise DegenerateSubgoalError(f"{int(degenerate.sum())} subgoal(s) with |F(w, z_w)^T z_w| < {DEGENERATE_TOL}")
        values = np.where(degenerate, 0.0, values)
    return values


def _finish(values: np.ndarray, s, w, z):
    scalar = np.ndim(s) == 0 and np.ndim(w) == 0 and np.ndim(z) == 1
    return float(values[0]) if scalar else values


def a_fb(model: FbModel, s, w, z, on_degenerate: str = "raise"):
    """
    FB switching advantage
        F(s,z_w)^T z + (F(s,z_w)^T z_w / F(w,z_w)^T z_w) (F(w,z) - F(w,z_w))^T z - F(s,z)^T z
    with z_w = B(w) on the radius-sqrt(d) sphere.

    :param on_degenerate: "raise" a DegenerateSubgoalError, or "zero" the affected rows.
    """
    terms = fb_terms(model, s, w, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = switching_advantage_template(terms.s_zw_z, terms.s_zw_zw, terms.w_zw_zw, terms.w_z_z,
                                              terms.w_zw_z, terms.s_z_z)
    return _finish(_guard(terms, values, on_degenerate), s, w, z)


def a_fb_proxy(model: FbModel, s, w, z, on_degenerate: str = "raise"):
    """
    a_fb without the subtracted ratio * F(w,z_w)^T z term.
    """
    terms = fb_terms(model, s, w, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = terms.s_zw_z + terms.ratio * terms.w_z_z - terms.s_z_z
    return _finish(_guard(terms, values, on_degenerate), s, w, z)


def a_fb_prehit(model: FbModel, s, w, z, on_degenerate: str = "raise"):
    """
    Rewards gathered before reaching w: F(s,z_w)^T z - ratio * F(w,z_w)^T z.
    """
    terms = fb_terms(model, s, w, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = terms.s_zw_z - terms.ratio * terms.w_zw_z
    return _finish(_guard(terms, values, on_degenerate), s, w, z)


ADVANTAGES = {"full": a_fb, "proxy": a_fb_proxy, "prehit": a_fb_prehit}


def advantage_over_subgoals(model: FbModel, s: int, z: np.ndarray, variant: str = "proxy") -> np.ndarray:
    """
    Advantage of switching at every candidate subgoal w from a fixed state s; degenerate subgoals read 0.
    """
    w = np.arange(model.n_states)
    return ADVANTAGES[variant](model, np.full(w.size, int(s)), w, z, on_degenerate="zero")
