"""Ground-state spin Hamiltonian of the NV center, its eigenstates and torques.

All internal quantities are SI with frequencies as angular frequencies
(rad/s). Spin operators act on the basis ``{|+1>, |0>, |-1>}`` quantized
along the NV axis ``e3``.

Each NV class is treated in its own frame ``(e1, e2, e3)`` with ``e3`` the
class axis and ``e1`` in the plane spanned by ``e3`` and the static field, so
that the field has no ``e2`` component and every eigenstate torque lies along
``+-e2``. Eigenstates are labeled ``"0"``, ``"-1"``, ``"+1"`` in ascending
energy order, which is the adiabatic continuation of ``|0>, |-1>, |+1>``
from zero field for any field direction off the NV axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .constants import HBAR, TWO_PI
from .trace import SignalTrace

LABELS = ("0", "-1", "+1")
TRANSITIONS = ("minus", "plus")

_S2 = np.sqrt(2.0)
SX = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex) / _S2
SY = np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex) / _S2
SZ = np.diag([1.0, 0.0, -1.0]).astype(complex)
SPIN = (SX, SY, SZ)
# index of |m_s = 0> in the basis
MS0 = 1

DEFAULT_AXES = tuple(
    tuple(float(c) / np.sqrt(3.0) for c in v)
    for v in ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1))
)
# fixed direction defining the field plane of the angle representation
REFERENCE_DIRECTION = np.array([0.0, 0.0, 1.0])

TETRAHEDRAL_ANGLE = float(np.arccos(-1.0 / 3.0))


class ConfigurationError(ValueError):
    """Invalid model constants (axes, rates, signs)."""


class InputError(ValueError):
    """Invalid arguments to an operation."""


@dataclass(frozen=True)
class NvParams:
    """Ensemble constants. Rates in rad/s, ``gamma_e`` in rad/(s T)."""

    D: float = TWO_PI * 2.87e9
    gamma_e: float = -TWO_PI * 28.0e9
    Gamma1: float = TWO_PI * 1e3
    Gamma2star: float = TWO_PI * 5e6
    gamma_las: float = TWO_PI * 1e3
    N_per_class: float = 5e9
    class_axes: tuple = DEFAULT_AXES

    def __post_init__(self):
        if not self.D > 0:
            raise ConfigurationError(f"zero-field splitting D must be positive, got {self.D}")
        if not self.gamma_e < 0:
            raise ConfigurationError(f"gamma_e must be negative, got {self.gamma_e}")
        for name in ("Gamma1", "gamma_las"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if not self.Gamma2star > 0:
            raise ConfigurationError("Gamma2star must be > 0")
        if not self.N_per_class > 0:
            raise ConfigurationError("N_per_class must be > 0")
        axes = np.asarray(self.class_axes, dtype=float)
        if axes.shape != (4, 3):
            raise ConfigurationError(f"class_axes must be four 3-vectors, got shape {axes.shape}")
        norms = np.linalg.norm(axes, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ConfigurationError(f"class axes must have unit norm, got norms {norms}")
        for i in range(4):
            for j in range(i + 1, 4):
                ang = np.arccos(np.clip(axes[i] @ axes[j], -1.0, 1.0))
                if abs(ang - TETRAHEDRAL_ANGLE) > 1e-9:
                    raise ConfigurationError(
                        f"class axes {i} and {j} are {np.degrees(ang):.6f} deg apart, "
                        "expected arccos(-1/3)"
                    )
        object.__setattr__(self, "class_axes", tuple(tuple(float(c) for c in a) for a in axes))

    @property
    def axes(self) -> np.ndarray:
        return np.array(self.class_axes)

    def axis(self, class_index: int) -> np.ndarray:
        if class_index not in range(4):
            raise InputError(f"class_index must be 0..3, got {class_index}")
        return np.array(self.class_axes[class_index])


def _perp_reference(axis: np.ndarray) -> np.ndarray:
    """Unit vector perpendicular to ``axis`` in the plane of ``axis`` and the reference."""
    for ref in (REFERENCE_DIRECTION, np.array([1.0, 0.0, 0.0])):
        v = ref - (ref @ axis) * axis
        n = np.linalg.norm(v)
        if n > 1e-6:
            return v / n
    raise ConfigurationError("cannot build a reference direction for this axis")


@dataclass(frozen=True)
class StaticField:
    """Static field B0, stored as a lab-frame vector in Tesla.

    Use :meth:`from_angle` for the (amplitude, theta) form relative to a
    class axis: the field lies at angle ``theta`` from the axis, in the plane
    of the axis and :data:`REFERENCE_DIRECTION`, rotated by ``azimuth``
    about the axis (0 by default).
    """

    lab_vector: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        v = np.asarray(self.lab_vector, dtype=float).reshape(-1)
        if v.shape != (3,) or not np.all(np.isfinite(v)):
            raise InputError(f"field must be a finite 3-vector, got {self.lab_vector!r}")
        object.__setattr__(self, "lab_vector", tuple(float(c) for c in v))

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.lab_vector)

    @property
    def amplitude(self) -> float:
        return float(np.linalg.norm(self.lab_vector))

    @classmethod
    def from_angle(cls, amplitude: float, theta: float, class_index: int = 0,
                   params: NvParams | None = None, azimuth: float = 0.0) -> "StaticField":
        if amplitude < 0:
            raise InputError(f"field amplitude must be >= 0, got {amplitude}")
        if not 0.0 <= theta <= np.pi:
            raise InputError(f"theta must lie in [0, pi], got {theta}")
        params = params or NvParams()
        e3 = params.axis(class_index)
        e1 = _perp_reference(e3)
        e2 = np.cross(e3, e1)
        direction = np.cos(theta) * e3 + np.sin(theta) * (np.cos(azimuth) * e1 + np.sin(azimuth) * e2)
        return cls(tuple(amplitude * direction))

    def angle_form(self, class_index: int = 0, params: NvParams | None = None):
        """Return ``(amplitude, theta, azimuth)`` relative to a class axis."""
        params = params or NvParams()
        e3 = params.axis(class_index)
        e1 = _perp_reference(e3)
        e2 = np.cross(e3, e1)
        b = self.vector
        amp = float(np.linalg.norm(b))
        if amp == 0.0:
            return 0.0, 0.0, 0.0
        theta = float(np.arccos(np.clip(b @ e3 / amp, -1.0, 1.0)))
        azimuth = float(np.arctan2(b @ e2, b @ e1)) if np.hypot(b @ e1, b @ e2) > 0 else 0.0
        return amp, theta, azimuth


def class_frame(params: NvParams, field: StaticField, class_index: int,
                azimuth: float = 0.0) -> np.ndarray:
    """Rows ``(e1, e2, e3)`` of the class frame; ``azimuth`` rotates e1 about e3."""
    e3 = params.axis(class_index)
    b = field.vector
    b_perp = b - (b @ e3) * e3
    n = np.linalg.norm(b_perp)
    if n > 1e-12 * max(np.linalg.norm(b), 1e-300) and n > 0:
        e1 = b_perp / n
    else:
        e1 = _perp_reference(e3)
    e2 = np.cross(e3, e1)
    if azimuth:
        e1, e2 = np.cos(azimuth) * e1 + np.sin(azimuth) * e2, -np.sin(azimuth) * e1 + np.cos(azimuth) * e2
    return np.array([e1, e2, e3])


def build_hamiltonian(params: NvParams, field: StaticField, class_index: int,
                      azimuth: float = 0.0) -> np.ndarray:
    """H/hbar = D Sz^2 - gamma_e B.S in the class frame (rad/s)."""
    b = class_frame(params, field, class_index, azimuth) @ field.vector
    return params.D * (SZ @ SZ) - params.gamma_e * (b[0] * SX + b[1] * SY + b[2] * SZ)


@dataclass
class EigenSolution:
    """Labeled eigensystem of one NV class. Moments in J/T and torques in N m
    are lab-frame, per single spin."""

    energies: np.ndarray
    vectors: np.ndarray
    labels: dict
    moments: dict
    torques: dict
    frame: np.ndarray
    field: np.ndarray
    degenerate: bool = False
    metadata: dict = field(default_factory=dict)

    def vector(self, label: str) -> np.ndarray:
        return self.vectors[:, self.labels[label]]

    def energy(self, label: str) -> float:
        return float(self.energies[self.labels[label]])


def _resolve_degeneracies(energies, vectors, scale):
    """Co-diagonalize Sz inside (near-)degenerate subspaces; returns a flag."""
    tol = 1e-6 * scale
    flagged = False
    i = 0
    while i < 2:
        j = i + 1
        while j < 3 and energies[j] - energies[i] < tol:
            j += 1
        if j - i > 1:
            flagged = True
            sub = vectors[:, i:j]
            sz_sub = sub.conj().T @ SZ @ sub
            w, u = np.linalg.eigh(sz_sub)
            vectors[:, i:j] = sub @ u
        i = j
    return flagged


def solve_eigensystem(H: np.ndarray, params: NvParams, field: StaticField,
                      class_index: int = 0, azimuth: float = 0.0) -> EigenSolution:
    """Diagonalize a class-frame Hamiltonian and label its eigenstates.

    ``class_index`` and ``azimuth`` must match those used to build ``H``;
    they define the rotation back to the lab frame.
    """
    H = np.asarray(H)
    if H.shape != (3, 3):
        raise InputError("Hamiltonian must be 3x3")
    scale = max(np.abs(H).max(), params.D)
    if np.abs(H - H.conj().T).max() > 1e-14 * scale:
        raise InputError("Hamiltonian is not Hermitian")
    energies, vectors = np.linalg.eigh(H)
    vectors = vectors.copy()
    degenerate = _resolve_degeneracies(energies, vectors, params.D)
    # fix the global phase so that the largest component is real positive
    for k in range(3):
        v = vectors[:, k]
        p = np.argmax(np.abs(v))
        vectors[:, k] = v * (abs(v[p]) / v[p])

    frame = class_frame(params, field, class_index, azimuth)
    b = field.vector
    labels = dict(zip(LABELS, range(3)))
    moments, torques = {}, {}
    for lab, k in labels.items():
        v = vectors[:, k]
        s_cls = np.array([np.real(v.conj() @ S @ v) for S in SPIN])
        mu = HBAR * params.gamma_e * (frame.T @ s_cls)
        moments[lab] = mu
        torques[lab] = np.cross(mu, b)
    overlap = {lab: float(abs(vectors[MS0, k]) ** 2) for lab, k in labels.items()}
    return EigenSolution(energies, vectors, labels, moments, torques, frame, b.copy(),
                         degenerate, {"ms0_overlap": overlap, "class_index": class_index})


def eigensolve(params: NvParams, field: StaticField, class_index: int,
               azimuth: float = 0.0) -> EigenSolution:
    """``build_hamiltonian`` followed by ``solve_eigensystem``."""
    H = build_hamiltonian(params, field, class_index, azimuth)
    return solve_eigensystem(H, params, field, class_index, azimuth)


@dataclass(frozen=True)
class TransitionPair:
    f_minus: float
    f_plus: float


def transition_frequencies(sol: EigenSolution) -> TransitionPair:
    e0 = sol.energy("0")
    return TransitionPair((sol.energy("-1") - e0) / TWO_PI, (sol.energy("+1") - e0) / TWO_PI)


def transition_pairs_angle(params: NvParams, amplitude, theta):
    """Vectorized (f_minus, f_plus) in Hz for fields at ``theta`` from a class axis.

    Azimuth does not enter the spectrum, so only (amplitude, theta) matter.
    """
    amplitude, theta = np.broadcast_arrays(np.asarray(amplitude, float), np.asarray(theta, float))
    bx = amplitude * np.sin(theta)
    bz = amplitude * np.cos(theta)
    g = params.gamma_e
    H = np.zeros(amplitude.shape + (3, 3))
    # real symmetric: D Sz^2 - g (bx Sx + bz Sz)
    H[..., 0, 0] = params.D - g * bz
    H[..., 2, 2] = params.D + g * bz
    off = -g * bx / _S2
    H[..., 0, 1] = H[..., 1, 0] = off
    H[..., 1, 2] = H[..., 2, 1] = off
    E = np.linalg.eigvalsh(H)
    return (E[..., 1] - E[..., 0]) / TWO_PI, (E[..., 2] - E[..., 0]) / TWO_PI


@dataclass
class EigenstateTorques:
    torques: dict
    norms: dict
    projections: dict
    axis: np.ndarray


def eigenstate_torques(sol: EigenSolution, field: StaticField, N: float = 1.0,
                       axis: Sequence[float] = (0.0, 1.0, 0.0)) -> EigenstateTorques:
    """Ensemble torques ``N mu x B0`` of each eigenstate, with norms and a projection."""
    if N < 1:
        raise InputError(f"spin count must be >= 1, got {N}")
    b = field.vector
    ax = np.asarray(axis, dtype=float)
    ax = ax / np.linalg.norm(ax)
    torques = {lab: N * np.cross(sol.moments[lab], b) for lab in LABELS}
    return EigenstateTorques(
        torques,
        {lab: float(np.linalg.norm(t)) for lab, t in torques.items()},
        {lab: float(t @ ax) for lab, t in torques.items()},
        ax,
    )


def _excited_label(transition: str) -> str:
    if transition not in TRANSITIONS:
        raise InputError(f"transition must be 'minus' or 'plus', got {transition!r}")
    return "-1" if transition == "minus" else "+1"


def moment_change(sol: EigenSolution, transition: str) -> np.ndarray:
    """Single-spin moment change (mu_e - mu_0)/2 from full polarization to saturation."""
    return 0.5 * (sol.moments[_excited_label(transition)] - sol.moments["0"])


def driven_torque_change(params: NvParams, field: StaticField, class_index: int,
                         transition: str) -> np.ndarray:
    """Ensemble torque change N (dmu x B0) when a transition is saturated."""
    sol = eigensolve(params, field, class_index)
    return params.N_per_class * np.cross(moment_change(sol, transition), field.vector)


def population_torque_difference(sol: EigenSolution, transition: str) -> np.ndarray:
    """Single-spin torque difference tau_e - tau_g between full occupations."""
    return sol.torques[_excited_label(transition)] - sol.torques["0"]


def all_transitions(params: NvParams, field: StaticField):
    """Yield ``(class_index, transition, frequency_hz, EigenSolution)`` for all 8 lines."""
    for c in range(4):
        sol = eigensolve(params, field, c)
        pair = transition_frequencies(sol)
        yield c, "minus", pair.f_minus, sol
        yield c, "plus", pair.f_plus, sol


def lorentzian(f, f0, fwhm):
    """Unit-peak Lorentzian of full width ``fwhm``."""
    return 1.0 / (1.0 + ((np.asarray(f) - f0) / (0.5 * fwhm)) ** 2)


def odmr_spectrum(params: NvParams, field: StaticField, grid, contrast: float = 0.015,
                  linewidth: float = 10e6) -> SignalTrace:
    """Photoluminescence ``1 - sum contrast * L(f)`` over the eight transitions.

    ``linewidth`` is the full width at half maximum in Hz.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise InputError("frequency grid is empty")
    if not 0 < contrast < 1:
        raise InputError(f"contrast must lie in (0, 1), got {contrast}")
    if not linewidth > 0:
        raise InputError(f"linewidth must be positive, got {linewidth}")
    pl = np.ones_like(grid)
    lines = []
    for c, tr, f0, _ in all_transitions(params, field):
        pl -= contrast * lorentzian(grid, f0, linewidth)
        lines.append(f"{c}:{tr}:{f0:.6f}")
    return SignalTrace("frequency", "Hz", grid, {"PL": pl}, {"PL": ""},
                       {"field_T": ",".join(repr(x) for x in field.lab_vector),
                        "contrast": repr(contrast), "linewidth_Hz": repr(linewidth),
                        "transitions": ";".join(lines)})
